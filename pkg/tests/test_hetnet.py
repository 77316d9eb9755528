import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nomascma import hetnet
from nomascma.hetnet import (
    ChannelState,
    NetworkConfig,
    Topology,
    TopologyError,
    format_network_config,
    generate_channels,
    generate_scenario,
    generate_topology,
    load_network_config,
    parse_network_config,
)


def test_single_cell_single_user():
    cfg = NetworkConfig(num_small_cells=0, users_per_bs=(1,), p_max=(10.0,))
    topo = generate_topology(cfg, seed=1)
    assert np.array_equal(topo.bs_positions, [[0.0, 0.0]])
    assert topo.association.tolist() == [0]
    assert np.hypot(*topo.user_positions[0]) <= cfg.macro_radius


def test_small_cells_are_separated_and_inside_macro():
    cfg = NetworkConfig()
    for seed in range(20):
        topo = generate_topology(cfg, seed=seed)
        small = topo.bs_positions[1:]
        assert len(small) == 2
        assert np.hypot(*(small[0] - small[1])) >= 40.0
        assert np.all(np.hypot(small[:, 0], small[:, 1]) <= cfg.macro_radius)


def test_users_inside_serving_cell():
    cfg = NetworkConfig(num_small_cells=3, users_per_bs=(3, 2, 2, 2), p_max=(10, 2, 2, 2))
    topo = generate_topology(cfg, seed=4)
    radii = np.where(topo.association == 0, cfg.macro_radius, cfg.small_radius)
    d = np.hypot(*(topo.user_positions - topo.bs_positions[topo.association]).T)
    assert np.all(d <= radii + 1e-9)
    assert topo.association.tolist() == [0, 0, 0, 1, 1, 2, 2, 3, 3]


def test_same_seed_same_scenario():
    cfg = NetworkConfig()
    a, b = generate_scenario(cfg, seed=7), generate_scenario(cfg, seed=7)
    assert np.array_equal(a.gain, b.gain)
    assert np.array_equal(a.topology.user_positions, b.topology.user_positions)
    assert not np.array_equal(a.gain, generate_scenario(cfg, seed=8).gain)


def test_more_users_extends_smaller_scenario():
    base = NetworkConfig()
    small = generate_scenario(base.with_users(4), seed=3)
    big = generate_scenario(base.with_users(7), seed=3)
    # user j of BS f keeps its position and fading when users are added
    for f in range(3):
        us, ub = small.users_of(f), big.users_of(f)
        assert np.array_equal(small.topology.user_positions[us], big.topology.user_positions[ub[: us.size]])
        for b in range(3):
            assert np.array_equal(small.gain[b, us], big.gain[b, ub[: us.size]])


class _UnitFading:
    def exponential(self, scale, size):
        return np.ones(size)


def test_gain_formula_with_unit_fading(monkeypatch):
    monkeypatch.setattr(hetnet, "_stream", lambda *key: _UnitFading())
    topo = Topology(np.array([[0.0, 0.0]]), np.array([[10.0, 0.0]]), np.array([0]))
    cfg = NetworkConfig(num_small_cells=0, users_per_bs=(1,), p_max=(1.0,), num_subcarriers=2)
    state = generate_channels(topo, cfg, seed=2)
    np.testing.assert_allclose(state.gain, 1e-4, rtol=1e-12)


def test_zero_exponent_gives_fading_only():
    cfg = NetworkConfig(pathloss_exponent=0.0)
    a = generate_scenario(cfg, seed=5)
    b = generate_scenario(NetworkConfig(), seed=5)
    d = b.topology.distances()
    np.testing.assert_allclose(a.gain, b.gain / d[:, :, None] ** -4.0, rtol=1e-10)


def test_fading_mean_is_one():
    cfg = NetworkConfig(num_small_cells=0, users_per_bs=(1,), p_max=(1.0,), num_subcarriers=100_000, pathloss_exponent=0.0)
    state = generate_scenario(cfg, seed=11)
    assert 0.98 <= state.gain.mean() <= 1.02


def test_distance_floor():
    topo = Topology(np.array([[0.0, 0.0]]), np.array([[0.0, 0.0]]), np.array([0]))
    assert topo.distances()[0, 0] == 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 3), st.integers(1, 4))
def test_gains_nonnegative_and_complete(seed, small, per_cell):
    cfg = NetworkConfig(
        num_small_cells=small,
        users_per_bs=(per_cell,) * (small + 1),
        p_max=(10.0,) + (2.0,) * small,
        num_subcarriers=3,
    )
    state = generate_scenario(cfg, seed=seed)
    assert state.gain.shape == (small + 1, per_cell * (small + 1), 3)
    assert np.all(state.gain >= 0)
    assert np.all(state.noise == cfg.noise_power)


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 400.0), st.floats(1.0, 400.0), st.floats(0.01, 10.0))
def test_farther_means_weaker(d1, d2, fade):
    if d1 == d2:
        return
    near, far = sorted((d1, d2))
    assert fade * far ** (2 * -2.0) < fade * near ** (2 * -2.0)


def test_overcrowded_small_cells_raise():
    cfg = NetworkConfig(macro_radius=50.0, small_radius=20.0, num_small_cells=8, users_per_bs=(1,) * 9, p_max=(1.0,) * 9)
    with pytest.raises(TopologyError):
        generate_topology(cfg, seed=0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(macro_radius=10.0, small_radius=20.0),
        dict(users_per_bs=(1, 1)),
        dict(p_max=(1.0, 0.0, 1.0)),
        dict(noise_power=0.0),
        dict(users_per_bs=(1, 0, 1)),
    ],
)
def test_invalid_config_rejected(kwargs):
    with pytest.raises(ValueError):
        NetworkConfig(**kwargs)


def test_bad_seed_rejected():
    with pytest.raises(ValueError):
        generate_scenario(NetworkConfig(), seed=-1)


def test_channel_state_validation():
    with pytest.raises(ValueError):
        ChannelState(gain=np.ones((1, 1, 1)), noise=0.0, association=[0], p_max=[1.0])
    with pytest.raises(ValueError):
        ChannelState(gain=np.ones((1, 1, 1)), noise=1.0, association=[1], p_max=[1.0])


def test_with_users_round_robin():
    base = NetworkConfig()
    assert base.with_users(4).users_per_bs == (2, 1, 1)
    assert base.with_users(8).users_per_bs == (3, 3, 2)
    with pytest.raises(ValueError):
        base.with_users(2)


def test_with_small_cells():
    base = NetworkConfig()
    assert base.with_small_cells(0).users_per_bs == (2,)
    grown = base.with_small_cells(3)
    assert grown.users_per_bs == (2, 1, 1, 1)
    assert grown.p_max == (10.0, 2.0, 2.0, 2.0)


def test_scenario_file_round_trip(tmp_path):
    cfg = NetworkConfig(num_small_cells=1, users_per_bs=(3, 2), p_max=(10.0, 2.5), noise_power=2e-12, seed=9)
    path = tmp_path / "s.cfg"
    path.write_text(format_network_config(cfg))
    assert load_network_config(path) == cfg


def test_scenario_file_keys_and_errors():
    text = "\n".join(
        [
            "# comment",
            "macro_radius_m=500",
            "small_radius_m=20",
            "num_small_cells=1",
            "users_per_bs=2,1",
            "num_subcarriers=8",
            "pathloss_exponent=-2",
            "noise_power_w=1e-12",
            "p_max_w=10,2",
            "seed=3",
        ]
    )
    cfg = parse_network_config(text)
    assert cfg.users_per_bs == (2, 1) and cfg.p_max == (10.0, 2.0) and cfg.seed == 3
    with pytest.raises(ValueError, match="unknown key"):
        parse_network_config(text + "\nbogus=1")
    with pytest.raises(ValueError, match="missing"):
        parse_network_config("seed=1")
