"""Scenario files for the one-dimensional heat example.

A scenario is an INI file::

    [problem]
    id = my_run
    nu = 0.5
    T = 1.0
    P = 16          ; retained eigenmodes
    M = 256         ; time steps
    N = 8           ; control channels
    varsigma = 0.5
    control = section5   ; B = diag(lambda_1..lambda_N) on the first N modes
    quadrature = exact

    [kernel]
    kind = separable     ; zero | separable | gaussian | exponential | matrix
    amplitude = 1e-3
    a = 1
    b = 1

    [states]
    x0 = 1.0, 0.5        ; coefficient list (zero-padded) or a profile name
    xd = 0.0, 0.2

    [constants]
    M_T = 1.0            ; optional overrides: M_T, M_1, H, H1

The neutral term is ``h(y)(x) = int_0^1 F(x, z) y(z) dz``. Admissible
kernels are square integrable and vanish at ``x = 0`` and ``x = 1``; both
conditions are checked numerically on the sampled kernel.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from ..evolution import NeutralMap, SteeringProblem
from ..exceptions import InvalidScenarioError, ValidationError
from ..mittag_leffler import s_kernel
from ..spectral import GridSpec, SpectralState, make_dirichlet_laplacian, project

__all__ = [
    "CONTROL_KINDS",
    "KERNEL_KINDS",
    "PROFILES",
    "Diagnostic",
    "KernelSpec",
    "ScenarioConfig",
    "build_problem",
    "build_section5",
    "kernel_function",
    "kernel_matrix",
    "list_shipped",
    "load_scenario",
    "save_scenario",
    "validate_scenario",
]

KERNEL_KINDS = ("zero", "separable", "gaussian", "exponential", "matrix")
CONTROL_KINDS = ("section5", "identity")
CONSTANT_KEYS = ("M_T", "M_1", "H", "H1")

PROFILES = {
    "zero": lambda z: np.zeros_like(z),
    "parabola": lambda z: 4.0 * z * (1.0 - z),
    "hat": lambda z: 1.0 - np.abs(2.0 * z - 1.0),
    "sine": lambda z: np.sqrt(2.0) * np.sin(np.pi * z),
}

_BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """Neutral kernel ``F(x, z)``.

    ``separable``: ``amplitude * sin(a pi x) sin(b pi z)``.
    ``gaussian``: ``amplitude * exp(-(x - z)^2 / (2 width^2)) sin(pi x) sin(pi z)``.
    ``exponential``: ``amplitude * exp(-|x - z| / width)``; it does not vanish
    on the boundary and is rejected unless ``amplitude`` is zero.
    ``matrix``: mode-space matrix read from ``path`` (whitespace separated).
    """

    kind: str = "zero"
    amplitude: float = 0.0
    a: int = 1
    b: int = 1
    width: float = 0.1
    path: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    id: str = "scenario"
    nu: float = 0.5
    T: float = 1.0
    P: int = 16
    M: int = 256
    N: int = 8
    varsigma: float = 0.5
    control: str = "section5"
    quadrature: str = "exact"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    x0: tuple | str = (1.0,)
    xd: tuple | str = (0.0,)
    constants: tuple = ()

    @property
    def constant_overrides(self):
        return dict(self.constants)


@dataclass(frozen=True)
class Diagnostic:
    """One violated condition with its numeric evidence."""

    code: str
    message: str
    value: float = math.nan

    def __str__(self):
        return f"{self.code}: {self.message}"


def kernel_function(spec):
    """Vectorized ``F(x, z)`` for a function-type kernel."""
    c = float(spec.amplitude)
    if spec.kind == "zero":
        return lambda x, z: np.zeros(np.broadcast(x, z).shape)
    if spec.kind == "separable":
        a, b = int(spec.a), int(spec.b)
        return lambda x, z: c * np.sin(a * np.pi * x) * np.sin(b * np.pi * z)
    if spec.kind == "gaussian":
        w = float(spec.width)
        return lambda x, z: (c * np.exp(-((x - z) ** 2) / (2 * w * w))
                             * np.sin(np.pi * x) * np.sin(np.pi * z))
    if spec.kind == "exponential":
        w = float(spec.width)
        return lambda x, z: c * np.exp(-np.abs(x - z) / w)
    raise ValidationError(f"kernel kind {spec.kind!r} has no function form")


def _quadrature_points(P):
    return np.linspace(0.0, 1.0, max(64 * P, 257))


def kernel_matrix(spec, op):
    """Mode-space matrix ``F_pq = int int e_p(x) F(x, z) e_q(z) dz dx``."""
    if spec.kind == "zero":
        return np.zeros((op.P, op.P))
    if spec.kind == "matrix":
        if not spec.path:
            raise ValidationError("matrix kernel needs a path")
        F = np.atleast_2d(np.loadtxt(spec.path, dtype=float))
        if F.shape != (op.P, op.P):
            raise ValidationError(f"kernel matrix in {spec.path} is {F.shape}, need {(op.P, op.P)}")
        return F
    z = _quadrature_points(op.P)
    Fxz = kernel_function(spec)(z[:, None], z[None, :])
    E = op.eigenfunctions(z)
    inner = trapezoid(Fxz[None, :, :] * E[:, None, :], z, axis=2)  # (P, x)
    return trapezoid(E[:, None, :] * inner[None, :, :], z, axis=2)


def _state(spec, op):
    if isinstance(spec, str):
        if spec not in PROFILES:
            raise ValidationError(f"unknown profile {spec!r}; choose from {sorted(PROFILES)}")
        c = np.array(project(PROFILES[spec], op).coeffs)
        c[np.abs(c) < 1e-14] = 0.0
        return SpectralState(c)
    return SpectralState.from_list(spec, op.P)


def _control_matrix(cfg, op):
    B = np.zeros((cfg.P, cfg.N))
    idx = np.arange(cfg.N)
    B[idx, idx] = op.eigenvalues[: cfg.N] if cfg.control == "section5" else 1.0
    return B


def validate_scenario(cfg):
    """List every violated condition; an empty list means the scenario is admissible."""
    out = []

    def bad(code, msg, value=math.nan):
        out.append(Diagnostic(code, msg, float(value)))

    if not 0 < cfg.nu < 1:
        bad("nu", f"nu must lie in (0, 1), got {cfg.nu}", cfg.nu)
    if not (math.isfinite(cfg.T) and cfg.T > 0):
        bad("T", f"final time must be positive, got {cfg.T}", cfg.T)
    if cfg.P < 1:
        bad("P", f"need at least one mode, got P={cfg.P}", cfg.P)
    if cfg.M < 2:
        bad("M", f"need at least 2 time steps, got M={cfg.M}", cfg.M)
    if cfg.N < 1:
        bad("N", f"need at least one control channel, got N={cfg.N}", cfg.N)
    if cfg.N > cfg.P:
        bad("N<=P", f"control dimension N={cfg.N} exceeds mode count P={cfg.P}", cfg.N)
    if not 0 < cfg.varsigma < 1:
        bad("varsigma", f"varsigma must lie in (0, 1), got {cfg.varsigma}", cfg.varsigma)
    if cfg.control not in CONTROL_KINDS:
        bad("control", f"control must be one of {CONTROL_KINDS}, got {cfg.control!r}")
    if cfg.quadrature not in ("exact", "midpoint"):
        bad("quadrature", f"quadrature must be 'exact' or 'midpoint', got {cfg.quadrature!r}")
    k = cfg.kernel
    if k.kind not in KERNEL_KINDS:
        bad("kernel.kind", f"kernel kind must be one of {KERNEL_KINDS}, got {k.kind!r}")
    for key in dict(cfg.constants):
        if key not in CONSTANT_KEYS:
            bad("constants", f"unknown constant {key!r}; allowed {CONSTANT_KEYS}")
    for name in ("x0", "xd"):
        v = getattr(cfg, name)
        if isinstance(v, str):
            if v not in PROFILES:
                bad(name, f"unknown profile {v!r}")
        elif len(v) > cfg.P:
            bad(name, f"{len(v)} coefficients given for P={cfg.P} modes", len(v))
        elif not all(math.isfinite(x) for x in v):
            bad(name, "coefficients must be finite")
    if out or cfg.P < 1:
        return out

    if k.kind in ("gaussian", "exponential") and not k.width > 0:
        bad("kernel.width", f"kernel width must be positive, got {k.width}", k.width)
        return out
    op = make_dirichlet_laplacian(cfg.P)
    if k.kind in ("separable", "gaussian", "exponential"):
        z = _quadrature_points(cfg.P)
        F = kernel_function(k)(z[:, None], z[None, :])
        l2 = trapezoid(trapezoid(F**2, z, axis=1), z)
        if not math.isfinite(l2):
            bad("kernel.square_integrable", f"int int F^2 is not finite ({l2})", l2)
        scale = max(1.0, float(np.max(np.abs(F))))
        edge = max(float(np.max(np.abs(F[0]))), float(np.max(np.abs(F[-1]))))
        if edge > _BOUNDARY_TOL * scale:
            bad("kernel.boundary", f"F(0, z) or F(1, z) is nonzero (max |F| on the edge {edge:.3g})", edge)
        if k.kind == "separable" and (max(k.a, k.b) > cfg.P or min(k.a, k.b) < 1):
            bad("kernel.modes", f"separable kernel modes a={k.a}, b={k.b} must lie in 1..P")
    try:
        Fm = kernel_matrix(k, op)
    except (ValidationError, OSError) as exc:
        bad("kernel", str(exc))
        return out
    if not np.all(np.isfinite(Fm)):
        bad("kernel.square_integrable", "projected kernel has non-finite entries")
        return out

    consts = dict(cfg.constants)
    H = float(np.linalg.norm(op.power(cfg.varsigma)[:, None] * Fm, 2))
    for key in ("H", "H1"):
        if key in consts and consts[key] < H * (1 - 1e-12):
            bad(f"constants.{key}", f"declared {key}={consts[key]:.6g} is below |A^varsigma F| = {H:.6g}", consts[key])
    if "M_T" in consts and consts["M_T"] < 1:
        bad("constants.M_T", f"M_T must be at least 1, got {consts['M_T']}", consts["M_T"])
    if "M_1" in consts:
        bnorm = float(np.linalg.norm(_control_matrix(cfg, op), 2))
        if consts["M_1"] < bnorm * (1 - 1e-12):
            bad("constants.M_1", f"declared M_1={consts['M_1']:.6g} is below |B| = {bnorm:.6g}", consts["M_1"])

    # uncontrolled modes must already evolve to the target when decoupled
    free = np.arange(cfg.N, cfg.P)
    if free.size and not np.any(Fm[free]) and not np.any(Fm[:, free]):
        x0, xd = _state(cfg.x0, op), _state(cfg.xd, op)
        reach = s_kernel(cfg.nu, cfg.T, op.eigenvalues[free]) * x0.coeffs[free]
        gap = float(np.max(np.abs(xd.coeffs[free] - reach)))
        if gap > 1e-9 * max(1.0, xd.norm()):
            bad("xd.reachable", f"modes {cfg.N + 1}..{cfg.P} carry no control; the target "
                f"differs from their free evolution by {gap:.3g}", gap)
    return out


def build_problem(cfg):
    """Assemble the :class:`SteeringProblem` described by ``cfg``.

    Raises
    ------
    InvalidScenarioError
        Listing every violated condition.
    """
    diags = validate_scenario(cfg)
    if diags:
        raise InvalidScenarioError(
            f"scenario {cfg.id!r} is invalid: " + "; ".join(str(d) for d in diags), diags
        )
    op = make_dirichlet_laplacian(cfg.P)
    Fm = kernel_matrix(cfg.kernel, op)
    consts = dict(cfg.constants)
    h = NeutralMap.from_kernel(Fm, op, cfg.varsigma)
    if "H" in consts or "H1" in consts:
        h = NeutralMap(Fm, consts.get("H", h.lipschitz_H), consts.get("H1", h.growth_H1), cfg.varsigma)
    B = _control_matrix(cfg, op)
    if "M_1" in consts:
        M_1 = consts["M_1"]
    elif cfg.control == "section5":
        M_1 = cfg.N * float(op.eigenvalues[cfg.N - 1])
    else:
        M_1 = None
    return SteeringProblem(
        nu=cfg.nu, op=op, B=B, h=h, x0=_state(cfg.x0, op), xd=_state(cfg.xd, op),
        grid=GridSpec(cfg.T, cfg.M), M_1=M_1, name=cfg.id, quadrature=cfg.quadrature,
    )


def build_section5(P=16, M=256, N=8, kernel=None, x0=(1.0,), xd=(0.0,), quadrature="exact"):
    """Heat example with ``nu = 1/2``, ``T = 1`` and ``B = diag(lambda_1..lambda_N)``."""
    cfg = ScenarioConfig(
        id="section5", nu=0.5, T=1.0, P=P, M=M, N=N, varsigma=0.5, control="section5",
        quadrature=quadrature, kernel=kernel or KernelSpec(),
        x0=_as_state_spec(x0), xd=_as_state_spec(xd),
    )
    return build_problem(cfg)


def _as_state_spec(v):
    return v if isinstance(v, str) else tuple(float(x) for x in np.ravel(v))


# file format


def _get(section, key, conv, default, sect_name):
    if key not in section:
        return default
    raw = section[key]
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"[{sect_name}] {key}: cannot parse {raw!r} as {conv.__name__}") from None


def _int(raw):
    f = float(raw)
    if f != int(f):
        raise ValueError(raw)
    return int(f)


def _state_spec(raw):
    raw = raw.strip()
    if raw in PROFILES:
        return raw
    if not raw:
        return ()
    return tuple(float(x) for x in raw.replace(";", ",").split(","))


_state_spec.__name__ = "coefficient list or profile name"


def list_shipped():
    """Names of the scenarios bundled with the package."""
    data = resources.files(__package__) / "data"
    return sorted(p.name[:-4] for p in data.iterdir() if p.name.endswith(".ini"))


def _resolve(path):
    p = Path(path)
    if p.exists():
        return p.read_text(), str(p)
    name = p.name[:-4] if p.name.endswith(".ini") else p.name
    if name in list_shipped():
        res = resources.files(__package__) / "data" / f"{name}.ini"
        return res.read_text(), f"<shipped:{name}>"
    raise ValidationError(f"scenario {str(path)!r} not found (shipped: {', '.join(list_shipped())})")


def load_scenario(path):
    """Parse a scenario file, or a shipped scenario by name."""
    text, origin = _resolve(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ValidationError(f"{origin}: {exc}") from None
    unknown = set(cp.sections()) - {"problem", "kernel", "states", "constants"}
    if unknown:
        raise ValidationError(f"{origin}: unknown sections {sorted(unknown)}")
    if "problem" not in cp:
        raise ValidationError(f"{origin}: missing [problem] section")
    d = ScenarioConfig()
    pr = cp["problem"]
    allowed = {"id", "nu", "T", "P", "M", "N", "varsigma", "control", "quadrature"}
    extra = set(pr) - allowed
    if extra:
        raise ValidationError(f"{origin}: unknown keys in [problem]: {sorted(extra)}")
    kw = dict(
        id=pr.get("id", Path(origin).stem.strip("<>").split(":")[-1]),
        nu=_get(pr, "nu", float, d.nu, "problem"),
        T=_get(pr, "T", float, d.T, "problem"),
        P=_get(pr, "P", _int, d.P, "problem"),
        M=_get(pr, "M", _int, d.M, "problem"),
        N=_get(pr, "N", _int, d.N, "problem"),
        varsigma=_get(pr, "varsigma", float, d.varsigma, "problem"),
        control=pr.get("control", d.control),
        quadrature=pr.get("quadrature", d.quadrature),
    )
    if "kernel" in cp:
        ks = cp["kernel"]
        extra = set(ks) - {"kind", "amplitude", "a", "b", "width", "path"}
        if extra:
            raise ValidationError(f"{origin}: unknown keys in [kernel]: {sorted(extra)}")
        dk = KernelSpec()
        kw["kernel"] = KernelSpec(
            kind=ks.get("kind", dk.kind),
            amplitude=_get(ks, "amplitude", float, dk.amplitude, "kernel"),
            a=_get(ks, "a", _int, dk.a, "kernel"),
            b=_get(ks, "b", _int, dk.b, "kernel"),
            width=_get(ks, "width", float, dk.width, "kernel"),
            path=ks.get("path", dk.path),
        )
    if "states" in cp:
        st = cp["states"]
        kw["x0"] = _get(st, "x0", _state_spec, d.x0, "states")
        kw["xd"] = _get(st, "xd", _state_spec, d.xd, "states")
    if "constants" in cp:
        kw["constants"] = tuple(
            (k, _get(cp["constants"], k, float, None, "constants")) for k in cp["constants"]
        )
    return ScenarioConfig(**kw)


def save_scenario(cfg, path):
    """Write ``cfg`` so that :func:`load_scenario` restores it exactly."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["problem"] = {
        "id": cfg.id, "nu": repr(float(cfg.nu)), "T": repr(float(cfg.T)),
        "P": str(cfg.P), "M": str(cfg.M), "N": str(cfg.N),
        "varsigma": repr(float(cfg.varsigma)), "control": cfg.control,
        "quadrature": cfg.quadrature,
    }
    k = cfg.kernel
    kern = {"kind": k.kind, "amplitude": repr(float(k.amplitude)), "a": str(k.a),
            "b": str(k.b), "width": repr(float(k.width))}
    if k.path is not None:
        kern["path"] = k.path
    cp["kernel"] = kern

    def fmt(v):
        return v if isinstance(v, str) else ", ".join(repr(float(x)) for x in v)

    cp["states"] = {"x0": fmt(cfg.x0), "xd": fmt(cfg.xd)}
    if cfg.constants:
        cp["constants"] = {key: repr(float(v)) for key, v in cfg.constants}
    with open(path, "w") as fh:
        cp.write(fh)
