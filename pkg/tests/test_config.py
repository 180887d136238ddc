import numpy as np
import pytest

from phasesplit.config import PRESETS, ConfigError, from_dict, loads_text, parse_config, preset


def test_equal_3compr_preset():
    cfg = preset("equal-3compr")
    for mat in cfg.materials:
        assert np.isclose(mat.young, 10.0) and np.isclose(mat.poisson, 0.25)
    assert cfg.loads == ["A11", "A22", "A33"]
    assert (cfg.eta, cfg.delta, cfg.p, cfg.beta) == (2.0, 1e-4, 2.0, -0.25)


def test_bone_polymer_preset():
    bone, polymer = preset("bone-polymer").materials
    assert np.isclose(bone.young / polymer.young, 15.0)
    assert np.isclose(bone.poisson, 0.1) and np.isclose(polymer.poisson, 0.3)


def test_all_presets_load_and_round_trip():
    assert set(PRESETS) == {"equal-3compr", "equal-2compr-1shear", "equal-1compr-2shear", "eta-sweep",
                            "p-sweep", "young-sweep", "bone-polymer", "2d-2compr"}
    for name in PRESETS:
        cfg = preset(name)
        again = loads_text(cfg.dumps())
        assert again.to_dict() == cfg.to_dict()
        assert again == cfg


def test_override_preset_key_by_key(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('preset = "young-sweep"\neta = 1.5\n[phase0]\nE = 40.0\nnu = 0.2\n[optimizer]\nmax_iter = 7\n')
    cfg = parse_config(path)
    assert cfg.eta == 1.5
    assert np.isclose(cfg.materials[0].young, 40.0)
    assert cfg.optimizer["max_iter"] == 7 and cfg.optimizer["gtol"] == 1e-4
    assert loads_text(cfg.dumps()) == cfg


def test_preset_name_as_path():
    assert parse_config("2d-2compr").dimension == 2


def test_sweep_expansion():
    runs = preset("young-sweep").expand_sweep()
    assert [tag for tag, _ in runs] == [f"phase0.E={e:g}" for e in (20, 40, 80, 160, 320)]
    assert np.isclose(runs[-1][1].materials[0].young, 320.0)
    assert runs[-1][1].sweep is None
    assert preset("equal-3compr").expand_sweep()[0][0] == ""


@pytest.mark.parametrize(
    "text,key",
    [
        ("[phase0]\nE = 10.0\nnu = 0.7\n", "nu"),
        ("bogus = 1\n", "bogus"),
        ('loads = ["A44"]\n', "loads"),
        ("loads = []\n", "loads"),
        ("beta = 0.0\n", "beta"),
        ("dimension = 4\n", "dimension"),
        ('dimension = 2\nloads = ["A33"]\n', "loads"),
        ("p = 0.5\n", "p"),
        ("eta = -1.0\n", "eta"),
        ("delta = 2.0\n", "delta"),
        ('interpolation = "cubic"\n', "interpolation"),
        ('preset = "nope"\n', "preset"),
        ("[phase1]\nE = 10.0\nnu = 0.2\nmu = 3.0\n", "phase1"),
        ("[optimizer]\nfoo = 1\n", "foo"),
        ("schedule = [17, 30]\n", "schedule"),
        ("[solver]\ntol = -1.0\n", "solver.tol"),
        ("[output]\ntile = 0\n", "output.tile"),
        ("this is not toml", "malformed"),
    ],
)
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        loads_text(text)


def test_poisson_error_mentions_bound():
    with pytest.raises(ConfigError, match=r"\(0, 0.5\)"):
        loads_text("[phase0]\nE = 10.0\nnu = 0.7\n")


def test_missing_file():
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config("/nonexistent/config.toml")


def test_lame_input():
    cfg = from_dict({"phase0": {"mu": 3.0, "lambda": 2.0}})
    assert (cfg.materials[0].mu, cfg.materials[0].lam) == (3.0, 2.0)


def test_make_objective_uses_config():
    from phasesplit.mesh import build_mesh

    cfg = preset("2d-2compr")
    obj = cfg.make_objective(build_mesh(2, 5), eps=0.1)
    assert obj.eps == 0.1 and len(obj.loads[0]) == 2 and obj.params.eta == 2.0
