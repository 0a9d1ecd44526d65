"""Bosonic code constructors, Knill-Laflamme checks and no-jump distortion."""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .fock import destroy, number

ERROR_LABEL = re.compile(r"^(I|a|adag|n)(?:\^(\d+))?$")
KL_TOL = 1e-9
CODE_DIM_CAP = 64


def error_operator(label: str, dim: int) -> np.ndarray:
    """Matrix of an error label such as ``a``, ``a^2``, ``adag`` or ``n^3``."""
    m = ERROR_LABEL.match(label.strip())
    if not m:
        raise ValueError(f"unrecognized error label {label!r}")
    kind, power = m.group(1), int(m.group(2) or 1)
    if kind == "I":
        return np.eye(dim, dtype=complex)
    base = {"a": destroy(dim), "adag": destroy(dim).conj().T, "n": number(dim)}[kind]
    return np.linalg.matrix_power(base, power)


def _pad(v: np.ndarray, dim: int) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.size > dim:
        if np.linalg.norm(v[dim:]) > 1e-12:
            raise ValueError(f"state support exceeds dimension {dim}")
        return v[:dim].copy()
    out = np.zeros(dim, dtype=complex)
    out[: v.size] = v
    return out


@dataclass(frozen=True, eq=False)
class ErrorSubspace:
    """Images of (|0_L>, |1_L>) under one error.

    ``label`` names the error operator.  For dephasing labels the stored
    states are the images with the code space and lower-order dephasing
    subspaces projected out.
    """

    label: str
    zero: np.ndarray
    one: np.ndarray

    @property
    def states(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.zero, self.one)


@dataclass(frozen=True, eq=False)
class CodeSpec:
    name: str
    logical_zero: np.ndarray
    logical_one: np.ndarray
    error_subspaces: tuple[ErrorSubspace, ...] = ()
    correctable_errors: tuple[str, ...] = ("I",)
    recovery_outputs: tuple[np.ndarray, np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        dim = max(self.logical_zero.size, self.logical_one.size,
                  *(max(e.zero.size, e.one.size) for e in self.error_subspaces))
        object.__setattr__(self, "logical_zero", _pad(self.logical_zero, dim))
        object.__setattr__(self, "logical_one", _pad(self.logical_one, dim))
        subs = tuple(ErrorSubspace(e.label, _pad(e.zero, dim), _pad(e.one, dim)) for e in self.error_subspaces)
        object.__setattr__(self, "error_subspaces", subs)
        self._validate()

    # -------------------------------------------------------------- checks
    def _validate(self) -> None:
        z, o = self.logical_zero, self.logical_one
        for v in (z, o, *(s for e in self.error_subspaces for s in e.states)):
            if abs(np.linalg.norm(v) - 1) > 1e-12:
                raise ValueError(f"{self.name}: basis state not unit norm")
        if abs(np.vdot(z, o)) > 1e-12:
            raise ValueError(f"{self.name}: codewords not orthogonal")
        dim = self.dim + 4  # headroom so gains do not fall off the edge
        prior = [_pad(z, dim), _pad(o, dim)]
        for e in self.error_subspaces:
            op = error_operator(e.label, dim)
            images = []
            for cw, stored in ((z, e.zero), (o, e.one)):
                img = op @ _pad(cw, dim)
                if e.label.startswith("n"):
                    for p in prior:
                        img = img - np.vdot(p, img) * p
                img = img / np.linalg.norm(img)
                if np.max(np.abs(img - _pad(stored, dim))) > 1e-10:
                    raise ValueError(f"{self.name}: error state for {e.label} is not the normalized image")
                images.append(_pad(stored, dim))
            if e.label.startswith("n"):
                prior.extend(images)

    @property
    def dim(self) -> int:
        """Smallest truncation holding the codewords and error states."""
        vecs = [self.logical_zero, self.logical_one, *(s for e in self.error_subspaces for s in e.states)]
        top = max(int(np.nonzero(np.abs(v) > 1e-14)[0].max()) for v in vecs)
        return top + 1

    @property
    def average_photon_number(self) -> float:
        n = np.arange(self.logical_zero.size)
        return float(0.5 * (np.abs(self.logical_zero) ** 2 @ n + np.abs(self.logical_one) ** 2 @ n))

    def codewords(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        return _pad(self.logical_zero, dim), _pad(self.logical_one, dim)

    def error_states(self, dim: int, index: int = 0) -> tuple[np.ndarray, np.ndarray]:
        e = self.error_subspaces[index]
        return _pad(e.zero, dim), _pad(e.one, dim)

    def recovered_codewords(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """States the recovery maps the first error subspace onto.

        Exact codes return the codewords themselves; approximate probe codes
        may carry a deformed target.
        """
        if self.recovery_outputs is None:
            return self.codewords(dim)
        return tuple(_pad(v, dim) for v in self.recovery_outputs)

    # ---------------------------------------------------------- serialize
    def to_json(self) -> str:
        def cx(v):
            return [[float(x.real), float(x.imag)] for x in v]

        doc = {
            "name": self.name,
            "dim": self.logical_zero.size,
            "logical_zero": cx(self.logical_zero),
            "logical_one": cx(self.logical_one),
            "error_subspaces": [
                {"label": e.label, "zero": cx(e.zero), "one": cx(e.one)} for e in self.error_subspaces
            ],
            "correctable_errors": list(self.correctable_errors),
        }
        if self.recovery_outputs is not None:
            doc["recovery_outputs"] = [cx(v) for v in self.recovery_outputs]
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "CodeSpec":
        doc = json.loads(text)

        def vec(pairs):
            return np.array([complex(re_, im) for re_, im in pairs])

        rec = doc.get("recovery_outputs")
        return cls(
            name=doc["name"],
            logical_zero=vec(doc["logical_zero"]),
            logical_one=vec(doc["logical_one"]),
            error_subspaces=tuple(
                ErrorSubspace(e["label"], vec(e["zero"]), vec(e["one"])) for e in doc["error_subspaces"]
            ),
            correctable_errors=tuple(doc.get("correctable_errors", ["I"])),
            recovery_outputs=None if rec is None else tuple(vec(v) for v in rec),
        )


def _fock_vec(amps: dict[int, float], dim: int | None = None) -> np.ndarray:
    dim = dim or max(amps) + 1
    v = np.zeros(dim, dtype=complex)
    for n, c in amps.items():
        v[n] = c
    return v


def _normalized_image(label: str, v: np.ndarray, headroom: int = 4) -> np.ndarray:
    dim = v.size + headroom
    img = error_operator(label, dim) @ _pad(v, dim)
    return img / np.linalg.norm(img)


def binomial_lowest() -> CodeSpec:
    """(|0>+|4>)/sqrt2 and |2>, protecting against single photon loss."""
    zero = _fock_vec({0: 1 / math.sqrt(2), 4: 1 / math.sqrt(2)})
    one = _fock_vec({2: 1.0}, 5)
    err = ErrorSubspace("a", _fock_vec({3: 1.0}, 5), _fock_vec({1: 1.0}, 5))
    return CodeSpec("binomial", zero, one, (err,), ("I", "a"))


def sqrt17() -> CodeSpec:
    s = math.sqrt(17.0)
    r6 = math.sqrt(6.0)
    zero = _fock_vec({0: math.sqrt(7 - s) / r6, 3: math.sqrt(s - 1) / r6})
    one = _fock_vec({1: math.sqrt(9 - s) / r6, 4: -math.sqrt(s - 3) / r6})
    err = ErrorSubspace(
        "a",
        _fock_vec({2: 1.0}, 5),
        _fock_vec({0: math.sqrt(s - 1) / r6, 3: -math.sqrt(7 - s) / r6}, 5),
    )
    return CodeSpec("sqrt17", zero, one, (err,), ("I", "a"))


def generalized_binomial(L: int, G: int, D: int, max_dim: int = CODE_DIM_CAP) -> CodeSpec:
    """Binomial code correcting up to L losses, G gains and D dephasing orders.

    Fock spacing S + 1 with S = L + G and order N = max(L, G, 2D).  The
    error subspaces are listed in the order losses (a, a^2, ...), gains
    (adag, ...), then dephasing (n, n^2, ...).
    """
    if min(L, G, D) < 0 or L + G + D == 0:
        raise ValueError("L, G, D must be non-negative and not all zero")
    S = L + G
    N = max(L, G, 2 * D)
    top = (N + 1) * (S + 1)
    dim = top + 1
    if dim + G > max_dim:
        raise ValueError(f"code needs {dim + G} Fock levels, above the cap of {max_dim}")
    zero = np.zeros(dim, dtype=complex)
    one = np.zeros(dim, dtype=complex)
    for p in range(N + 2):
        amp = math.sqrt(comb(N + 1, p) / 2**N)
        (zero if p % 2 == 0 else one)[p * (S + 1)] = amp
    subs = []
    for k in range(1, L + 1):
        lab = "a" if k == 1 else f"a^{k}"
        subs.append(ErrorSubspace(lab, _normalized_image(lab, zero, G), _normalized_image(lab, one, G)))
    for k in range(1, G + 1):
        lab = "adag" if k == 1 else f"adag^{k}"
        subs.append(ErrorSubspace(lab, _normalized_image(lab, zero, G), _normalized_image(lab, one, G)))
    prior = [_pad(zero, dim + G), _pad(one, dim + G)]
    for k in range(1, D + 1):
        lab = "n" if k == 1 else f"n^{k}"
        pair = []
        for cw in (zero, one):
            img = error_operator(lab, dim + G) @ _pad(cw, dim + G)
            for p in prior:
                img = img - np.vdot(p, img) * p
            pair.append(img / np.linalg.norm(img))
        prior.extend(pair)
        subs.append(ErrorSubspace(lab, pair[0], pair[1]))
    labels = ["I"] + [e.label for e in subs]
    code = CodeSpec(f"binomial(L={L},G={G},D={D})", zero, one, tuple(subs), tuple(labels))
    code.meta.update(spacing=S, order=N, required_dim=dim + G)
    return code


def fock_superposition(m: int, n: int) -> CodeSpec:
    """Two-level Fock probe {|m>, |n>}.

    With m >= 1 the single-loss error states |m-1>, |n-1> are attached, and
    the recovery target maps them back onto |m>, |n> while keeping the
    sqrt(m):sqrt(n) amplitude weighting of the loss branch.
    """
    if not 0 <= m < n:
        raise ValueError("need 0 <= m < n")
    zero = _fock_vec({m: 1.0}, n + 1)
    one = _fock_vec({n: 1.0}, n + 1)
    if m == 0:
        return CodeSpec(f"fock{m}{n}", zero, one, (), ("I",))
    err = ErrorSubspace("a", _fock_vec({m - 1: 1.0}, n + 1), _fock_vec({n - 1: 1.0}, n + 1))
    code = CodeSpec(f"fock{m}{n}", zero, one, (err,), ("I", "a"), recovery_outputs=(zero, one))
    return code


def probe_error_state(m: int, n: int, phi: float) -> np.ndarray:
    """Loss image of (|m> + e^{i phi}|n>)/sqrt2, normalized."""
    v = np.zeros(n + 1, dtype=complex)
    v[m - 1] = math.sqrt(m)
    v[n - 1] = math.sqrt(n) * np.exp(1j * phi)
    return v / np.linalg.norm(v)


# ------------------------------------------------------------------ KL

@dataclass(frozen=True)
class KLReport:
    errors: tuple[str, ...]
    residuals: np.ndarray  # residuals[k, l] for pair (E_k, E_l)
    passed: np.ndarray
    worst_residual: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return bool(self.worst_residual < self.tolerance)


def kl_check(code: CodeSpec, errors=None, tol: float = KL_TOL) -> KLReport:
    """Knill-Laflamme residuals for every pair of errors.

    For each pair (E_k, E_l) with M_ij = <i_L|E_k^dag E_l|j_L> the residual is
    max(|M_01|, |M_10|, |M_00 - M_11|), divided by |M_00| + |M_11| when that
    is non-zero so approximate codes get a scale-free number.
    """
    errors = tuple(errors if errors is not None else code.correctable_errors)
    max_power = max(int((ERROR_LABEL.match(e).group(2) or 1)) for e in errors)
    dim = code.logical_zero.size + 2 * max_power + 2
    z, o = code.codewords(dim)
    ops = [error_operator(e, dim) for e in errors]
    k = len(ops)
    res = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            m = ops[i].conj().T @ ops[j]
            m00, m11 = np.vdot(z, m @ z), np.vdot(o, m @ o)
            m01, m10 = np.vdot(z, m @ o), np.vdot(o, m @ z)
            raw = max(abs(m01), abs(m10), abs(m00 - m11))
            scale = abs(m00) + abs(m11)
            res[i, j] = raw / scale if scale > 1e-14 else raw
    worst = float(res.max())
    return KLReport(errors, res, res < tol, worst, tol)


# -------------------------------------------------------------- no-jump

@dataclass(frozen=True, eq=False)
class NoJumpMap:
    """Conditional no-loss deformation |i_L> -> |i'_L> (each normalized)."""

    zero: np.ndarray
    one: np.ndarray
    matrix: np.ndarray  # sum_i |i'_L><i_L|
    theta: float | None  # two-component |0_L> only: tan(theta) = ratio of outer amplitudes

    def apply(self, state: np.ndarray) -> np.ndarray:
        return self.matrix @ _pad(state, self.matrix.shape[0])


def no_jump_map(code: CodeSpec, kappa_c: float, t_wait: float) -> NoJumpMap:
    """Apply exp(-kappa_c n t / 2) to each codeword and renormalize.

    ``kappa_c`` in 1/µs, ``t_wait`` in µs.  For the lowest-order binomial
    code tan(theta) = exp(-2 kappa_c t_wait).
    """
    if kappa_c * t_wait >= 0.5:
        warnings.warn("kappa_c * T_W >= 0.5: outside the short-wait regime of the no-jump picture", stacklevel=2)
    dim = code.logical_zero.size
    decay = np.exp(-0.5 * kappa_c * t_wait * np.arange(dim))
    out = []
    for cw in code.codewords(dim):
        v = decay * cw
        out.append(v / np.linalg.norm(v))
    z, o = code.codewords(dim)
    matrix = np.outer(out[0], z.conj()) + np.outer(out[1], o.conj())
    support = np.nonzero(np.abs(out[0]) > 1e-14)[0]
    theta = None
    if support.size == 2:
        lo, hi = support
        theta = float(math.atan2(abs(out[0][hi]), abs(out[0][lo])))
    return NoJumpMap(out[0], out[1], matrix, theta)


def encoding_names() -> tuple[str, ...]:
    return ("binomial", "sqrt17", "fock14", "fock01", "transmon")


def code_by_name(name: str) -> CodeSpec:
    table = {
        "binomial": binomial_lowest,
        "sqrt17": sqrt17,
        "fock14": lambda: fock_superposition(1, 4),
        "fock01": lambda: fock_superposition(0, 1),
    }
    if name not in table:
        raise KeyError(name)
    return table[name]()


LOGICAL_LABELS = ("+Z", "-Z", "+X", "-X", "+Y", "-Y")


def logical_state(code: CodeSpec, label: str, dim: int | None = None) -> np.ndarray:
    """Cavity ket for a Pauli eigenstate of the encoded qubit (+Z is codeword 0)."""
    if label not in LOGICAL_LABELS:
        raise ValueError(f"unknown logical state {label!r}; valid: {', '.join(LOGICAL_LABELS)}")
    c0, c1 = code.codewords(dim or code.dim)
    amps = {
        "+Z": (1, 0), "-Z": (0, 1),
        "+X": (1, 1), "-X": (1, -1),
        "+Y": (1, 1j), "-Y": (1, -1j),
    }[label]
    v = amps[0] * c0 + amps[1] * c1
    return v / np.linalg.norm(v)
