import pytest

from fellerhawkes.config import ConfigError, load_config, parse_config
from fellerhawkes.kernels import Exponential, GIDTriplet, MittagLeffler, Scaled

BASE = {"horizon": 5.0, "dt": 0.001}


def cfg(**kw):
    return parse_config({**BASE, **kw})


def test_defaults():
    c = cfg()
    assert c.grid.n_cells == 5000
    assert c.kernel.limit_kernel() == Exponential(1.0)
    assert c.t_list == (1.0, 2.0, 5.0)


def test_default_times_clip_to_horizon():
    assert parse_config({"horizon": 2.0, "dt": 0.01}).t_list == (1.0, 2.0)


@pytest.mark.parametrize("raw", [
    {"replications": 0},
    {"eps": [0.0]},
    {"eps": 1.5},
    {"dt": 0.3},
    {"eps": 0.1, "a": 0.9},
    {"t": [6.0]},
    {"f": {"shape": "sawtooth"}},
    {"background": {"kind": "hilly"}},
    {"kernel": {"kernel": {"type": "pareto", "index": 1.5}}},
    {"colour": "blue"},
    {"seed": -1},
])
def test_invalid(raw):
    with pytest.raises(ConfigError):
        cfg(**raw)


def test_a_list_converts_to_eps():
    c = cfg(a=[0.9, 0.95])
    assert c.eps == pytest.approx((0.1, 0.05))


def test_thinned_family():
    c = cfg(kernel={"kernel": {"type": "mittag_leffler", "alpha": 0.5, "scale": 1.0}})
    spec = c.kernel.family(0.01).kernel(1)
    assert isinstance(spec, MittagLeffler)
    assert spec.scale == pytest.approx(0.01 ** 2)


def test_periodic_limit():
    c = cfg(kernel={"mode": "periodic", "kernels": [
        {"type": "exponential", "rate": 1.0},
        {"type": "gid", "drift": 0.5, "jump_locations": [1.0], "jump_weights": [0.2]},
    ]})
    lim = c.kernel.limit_kernel()
    assert isinstance(lim, GIDTriplet)
    assert lim.drift == pytest.approx(0.75)
    assert lim.jump_weights == pytest.approx((0.1,))


def test_scaled_mode_allows_heavy_tails():
    c = cfg(kernel={"mode": "scaled", "kappa": 2.0,
                    "kernel": {"type": "pareto", "index": 2.5, "scale": 1.0}})
    assert isinstance(c.kernel.family(0.1), Scaled)
    assert c.kernel.limit_kernel().rate == pytest.approx(2.0 / (2.5 / 1.5))


def test_hash_stable_and_sensitive():
    assert cfg().hash() == cfg().hash()
    assert cfg().hash() != cfg(seed=1).hash()
    assert cfg().with_seed(1).hash() == cfg(seed=1).hash()


def test_grid_file_background(tmp_path):
    from fellerhawkes.grid_measures import Grid, GridMeasure

    mu = GridMeasure.lebesgue(Grid(5.0, 0.001), 2.0)
    mu.to_csv(tmp_path / "mu.csv")
    (tmp_path / "c.toml").write_text(
        'horizon = 5.0\ndt = 0.001\n[background]\nkind = "grid_file"\npath = "mu.csv"\n')
    c = load_config(tmp_path / "c.toml")
    assert c.background_measure().total_mass == pytest.approx(10.0)


def test_grid_file_mismatch(tmp_path):
    from fellerhawkes.grid_measures import Grid, GridMeasure

    GridMeasure.lebesgue(Grid(5.0, 0.01)).to_csv(tmp_path / "mu.csv")
    (tmp_path / "c.toml").write_text(
        'horizon = 5.0\ndt = 0.001\n[background]\nkind = "grid_file"\npath = "mu.csv"\n')
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.toml").background_measure()


def test_malformed_toml(tmp_path):
    (tmp_path / "c.toml").write_text("horizon = = 5")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.toml")
