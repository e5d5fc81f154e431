import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracsteer.exceptions import InvalidScenarioError, ValidationError
from fracsteer.scenarios import (
    KernelSpec,
    ScenarioConfig,
    build_problem,
    build_section5,
    kernel_matrix,
    list_shipped,
    load_scenario,
    save_scenario,
    validate_scenario,
)
from fracsteer.spectral import make_dirichlet_laplacian
from fracsteer.steering import certificate_constants, contraction_certificate


def _small(**kw):
    base = dict(id="t", P=4, M=16, N=2, x0=(1.0, 0.5), xd=(0.0, 0.2))
    base.update(kw)
    return ScenarioConfig(**base)


def _codes(cfg):
    return {d.code for d in validate_scenario(cfg)}


def test_shipped_scenarios_load_and_validate():
    assert list_shipped() == ["section5_linear", "section5_neutral", "section5_stress"]
    for name in list_shipped():
        cfg = load_scenario(name)
        assert cfg.id == name
        assert (cfg.P, cfg.M, cfg.N, cfg.nu) == (16, 256, 8, 0.5)
        assert validate_scenario(cfg) == []


def test_shipped_certificates():
    q_lin, ok = contraction_certificate(certificate_constants(build_problem(load_scenario("section5_linear"))))
    assert q_lin == 0 and ok
    q, ok = contraction_certificate(certificate_constants(build_problem(load_scenario("section5_neutral"))))
    assert 0.4 < q < 0.6 and ok
    q, ok = contraction_certificate(certificate_constants(build_problem(load_scenario("section5_stress"))))
    assert q >= 1 and not ok


def test_section5_control_constant():
    prob = build_section5(P=4, M=16, N=2)
    assert prob.M_1 == pytest.approx(8 * math.pi**2)
    np.testing.assert_allclose(np.diag(prob.B), [math.pi**2, 4 * math.pi**2])
    assert prob.nu == 0.5 and prob.grid.T == 1.0


@pytest.mark.parametrize("c", [1e-3, 0.5, 2.5])
def test_separable_kernel_projection(c):
    op = make_dirichlet_laplacian(6)
    F = kernel_matrix(KernelSpec("separable", c), op)
    expected = np.zeros((6, 6))
    expected[0, 0] = c / 2
    np.testing.assert_allclose(F, expected, atol=1e-12 * max(c, 1))
    prob = build_problem(_small(P=6, kernel=KernelSpec("separable", c)))
    assert prob.h.lipschitz_H == pytest.approx(c * math.pi / 2, rel=1e-10)


def test_separable_cross_modes():
    op = make_dirichlet_laplacian(4)
    F = kernel_matrix(KernelSpec("separable", 1.0, a=2, b=3), op)
    assert F[1, 2] == pytest.approx(0.5, abs=1e-12)
    assert np.sum(np.abs(F)) == pytest.approx(0.5, abs=1e-10)


def test_gaussian_kernel_is_symmetric():
    op = make_dirichlet_laplacian(5)
    F = kernel_matrix(KernelSpec("gaussian", 0.1, width=0.2), op)
    np.testing.assert_allclose(F, F.T, atol=1e-14)
    assert validate_scenario(_small(kernel=KernelSpec("gaussian", 0.1, width=0.2))) == []


def test_matrix_kernel_file(tmp_path):
    F = np.diag([1e-3, 2e-3, 0.0, 0.0])
    np.savetxt(tmp_path / "F.txt", F)
    prob = build_problem(_small(kernel=KernelSpec("matrix", path=str(tmp_path / "F.txt"))))
    np.testing.assert_array_equal(prob.h.kernel, F)
    np.savetxt(tmp_path / "G.txt", np.eye(3))
    assert "kernel" in _codes(_small(kernel=KernelSpec("matrix", path=str(tmp_path / "G.txt"))))
    assert "kernel" in _codes(_small(kernel=KernelSpec("matrix")))


def test_kernel_not_vanishing_on_boundary_is_rejected():
    assert "kernel.boundary" in _codes(_small(kernel=KernelSpec("exponential", 0.1, width=0.3)))
    assert validate_scenario(_small(kernel=KernelSpec("exponential", 0.0, width=0.3))) == []


@pytest.mark.parametrize("kw,code", [
    ({"N": 5}, "N<=P"),
    ({"nu": 1.0}, "nu"),
    ({"M": 1}, "M"),
    ({"T": -1.0}, "T"),
    ({"varsigma": 1.5}, "varsigma"),
    ({"control": "boundary"}, "control"),
    ({"quadrature": "gauss"}, "quadrature"),
    ({"kernel": KernelSpec("wavelet")}, "kernel.kind"),
    ({"kernel": KernelSpec("separable", 1.0, a=9)}, "kernel.modes"),
    ({"kernel": KernelSpec("gaussian", 1.0, width=0.0)}, "kernel.width"),
    ({"x0": "triangle"}, "x0"),
    ({"xd": (1.0, 2.0, 3.0, 4.0, 5.0)}, "xd"),
    ({"xd": (0.0, 0.0, 1.0)}, "xd.reachable"),
    ({"constants": (("M_T", 0.5),)}, "constants.M_T"),
    ({"constants": (("gamma", 1.0),)}, "constants"),
    ({"constants": (("M_1", 1.0),)}, "constants.M_1"),
    ({"kernel": KernelSpec("separable", 0.1), "constants": (("H", 0.01),)}, "constants.H"),
])
def test_validation_codes(kw, code):
    cfg = _small(**kw)
    assert code in _codes(cfg)
    with pytest.raises(InvalidScenarioError) as info:
        build_problem(cfg)
    assert code in {d.code for d in info.value.diagnostics}


def test_all_violations_are_reported():
    codes = _codes(_small(N=5, nu=2.0, M=0))
    assert {"N<=P", "nu", "M"} <= codes


def test_constant_overrides_apply():
    cfg = _small(kernel=KernelSpec("separable", 0.01),
                 constants=(("H", 1.0), ("M_1", 100.0), ("M_T", 2.0)))
    prob = build_problem(cfg)
    assert prob.h.lipschitz_H == 1.0
    assert prob.M_1 == 100.0
    assert cfg.constant_overrides["M_T"] == 2.0


def test_profiles_project():
    prob = build_problem(_small(P=5, N=5, x0="sine", xd="zero"))
    np.testing.assert_allclose(prob.x0.coeffs, [1, 0, 0, 0, 0], atol=1e-12)
    assert not np.any(prob.xd.coeffs)


_cfgs = st.builds(
    ScenarioConfig,
    id=st.from_regex(r"[a-z][a-z0-9_]{0,10}", fullmatch=True),
    nu=st.floats(0.01, 0.99),
    T=st.floats(0.1, 10.0),
    P=st.integers(1, 8),
    M=st.integers(2, 64),
    N=st.integers(1, 8),
    varsigma=st.floats(0.01, 0.99),
    control=st.sampled_from(["section5", "identity"]),
    quadrature=st.sampled_from(["exact", "midpoint"]),
    kernel=st.builds(KernelSpec, kind=st.sampled_from(["zero", "separable", "gaussian"]),
                     amplitude=st.floats(-1e3, 1e3), a=st.integers(1, 8), b=st.integers(1, 8),
                     width=st.floats(1e-3, 1.0)),
    x0=st.one_of(st.sampled_from(["parabola", "hat"]),
                 st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=4).map(tuple)),
    xd=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=4).map(tuple),
    constants=st.lists(st.tuples(st.sampled_from(["M_T", "M_1", "H", "H1"]), st.floats(1.0, 1e4)),
                       max_size=4, unique_by=lambda kv: kv[0]).map(tuple),
)


@given(_cfgs)
def test_save_load_round_trip(tmp_path_factory, cfg):
    path = tmp_path_factory.mktemp("rt") / "s.ini"
    save_scenario(cfg, path)
    assert load_scenario(path) == cfg


def test_section5_builder_round_trip(tmp_path):
    cfg = replace(load_scenario("section5_neutral"), M=32)
    save_scenario(cfg, tmp_path / "n.ini")
    a = build_problem(load_scenario(tmp_path / "n.ini"))
    b = build_section5(M=32, kernel=cfg.kernel, x0=cfg.x0, xd=cfg.xd)
    np.testing.assert_array_equal(a.h.kernel, b.h.kernel)
    np.testing.assert_array_equal(a.x0.coeffs, b.x0.coeffs)
    assert a.M_1 == b.M_1


@pytest.mark.parametrize("text,match", [
    ("[problem]\nnu = half\n", r"\[problem\] nu"),
    ("[problem]\nP = 2.5\n", r"\[problem\] P"),
    ("[problem]\nnu = 0.5\ncolour = red\n", "unknown keys"),
    ("[problem]\n[extras]\n", "unknown sections"),
    ("[kernel]\nkind = zero\n", "missing"),
    ("[problem]\n[states]\nx0 = 1.0, abc\n", r"\[states\] x0"),
    ("[problem]\n[kernel]\nflavour = x\n", "unknown keys"),
    ("nu = 0.5\n", "s.ini"),
])
def test_parse_errors_carry_context(tmp_path, text, match):
    p = tmp_path / "s.ini"
    p.write_text(text)
    with pytest.raises(ValidationError, match=match):
        load_scenario(p)


def test_inline_comments_and_defaults(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[problem]\nP = 4   ; modes\nM = 8  # steps\nN = 2\n")
    cfg = load_scenario(p)
    assert (cfg.P, cfg.M, cfg.N, cfg.nu) == (4, 8, 2, 0.5)
    assert cfg.id == "c"


def test_unknown_scenario_name():
    with pytest.raises(ValidationError, match="not found"):
        load_scenario("section7")
