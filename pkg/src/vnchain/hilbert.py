"""Multipartite complex linear algebra on labeled tensor-product spaces.

Index convention (fixed everywhere): for a layout (s0, d0), (s1, d1), ...
the composite basis index is i0*(d1*d2*...) + i1*(d2*...) + ..., i.e. the
leftmost subsystem varies slowest.  This matches ``numpy.kron`` order, so
``tensor`` is a plain Kronecker product.

All values are immutable after construction and every operation is a pure
function; instances may be shared between threads freely.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    DegenerateLayoutError,
    DimensionMismatchError,
    LayoutConflictError,
    NonOrthonormalBasisError,
)
from .tolerances import DEFAULT, Tolerances


def _frozen_array(values, shape_hint=None) -> np.ndarray:
    out = np.array(values, dtype=complex)
    if shape_hint is not None and out.shape != shape_hint:
        raise DimensionMismatchError(
            f"expected array of shape {shape_hint}, got {out.shape}"
        )
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered, labeled subsystem dimensions defining a product basis."""

    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        subs = tuple((str(label), int(dim)) for label, dim in self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        labels = [label for label, _ in subs]
        if not labels:
            raise DegenerateLayoutError("layout needs at least one subsystem")
        if len(set(labels)) != len(labels):
            raise LayoutConflictError(f"duplicate subsystem labels in {labels}")
        if any(dim < 1 for _, dim in subs):
            raise DimensionMismatchError("subsystem dimensions must be >= 1")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def position(self, label: str) -> int:
        for i, (name, _) in enumerate(self.subsystems):
            if name == label:
                return i
        raise LayoutConflictError(f"unknown subsystem label {label!r}")

    def dim_of(self, label: str) -> int:
        return self.subsystems[self.position(label)][1]

    def restricted(self, keep: Iterable[str]) -> "SubsystemLayout":
        """Sub-layout of the given labels, preserving the original order."""
        keep = set(keep)
        missing = keep - set(self.labels)
        if missing:
            raise LayoutConflictError(f"unknown subsystem labels {sorted(missing)}")
        subs = tuple(s for s in self.subsystems if s[0] in keep)
        if not subs:
            raise DegenerateLayoutError("restriction keeps no subsystems")
        return SubsystemLayout(subs)

    def concat(self, other: "SubsystemLayout") -> "SubsystemLayout":
        collision = set(self.labels) & set(other.labels)
        if collision:
            raise LayoutConflictError(f"label collision on {sorted(collision)}")
        return SubsystemLayout(self.subsystems + other.subsystems)

    def relabeled(self, mapping: dict[str, str]) -> "SubsystemLayout":
        """Rename subsystems in place (dimensions and order unchanged)."""
        unknown = set(mapping) - set(self.labels)
        if unknown:
            raise LayoutConflictError(f"unknown subsystem labels {sorted(unknown)}")
        return SubsystemLayout(
            tuple((mapping.get(label, label), dim) for label, dim in self.subsystems)
        )

    def __str__(self) -> str:
        return "*".join(f"{label}({dim})" for label, dim in self.subsystems)


def layout(*subsystems: tuple[str, int]) -> SubsystemLayout:
    """Convenience constructor: ``layout(("A", 2), ("B", 3))``."""
    return SubsystemLayout(tuple(subsystems))


@dataclass(frozen=True)
class StateVector:
    """Pure multipartite state; unnormalized vectors must be flagged.

    Unnormalized instances carry expansion coefficients and similar
    intermediate vectors; they are never valid physical inputs to evolution.
    """

    layout: SubsystemLayout
    amplitudes: np.ndarray
    normalized: bool = True
    tol: InitVar[Tolerances] = DEFAULT

    def __post_init__(self, tol: Tolerances):
        amps = _frozen_array(self.amplitudes)
        if amps.ndim != 1 or amps.shape[0] != self.layout.dim:
            raise DimensionMismatchError(
                f"amplitudes of length {amps.shape} do not match layout "
                f"{self.layout} of dimension {self.layout.dim}"
            )
        object.__setattr__(self, "amplitudes", amps)
        if self.normalized:
            n = np.linalg.norm(amps)
            if abs(n - 1.0) > tol.norm:
                raise ValueError(f"state flagged normalized but ||amplitudes|| = {n!r}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        n = self.norm()
        if n < 1e-150:
            raise ValueError("cannot normalize a (numerically) zero vector")
        return StateVector(self.layout, self.amplitudes / n, normalized=True)

    def overlap(self, other: "StateVector") -> complex:
        """Inner product <self|other>."""
        if self.layout.dims != other.layout.dims:
            raise DimensionMismatchError("overlap of states on different layouts")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self) -> "DensityOperator":
        """Projector |psi><psi| as a density operator (normalized states only)."""
        if not self.normalized:
            raise DimensionMismatchError("density() needs a normalized state")
        return DensityOperator(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))

    def reorder(self, new_labels: Sequence[str]) -> "StateVector":
        """Permute subsystems into the given label order."""
        perm, new_layout = _permutation(self.layout, new_labels)
        tens = self.amplitudes.reshape(self.layout.dims).transpose(perm)
        return StateVector(new_layout, tens.reshape(-1), normalized=self.normalized)

    def relabeled(self, mapping: dict[str, str]) -> "StateVector":
        return StateVector(
            self.layout.relabeled(mapping), self.amplitudes, normalized=self.normalized
        )


@dataclass(frozen=True)
class DensityOperator:
    """Mixed or pure multipartite state as a unit-trace PSD matrix."""

    layout: SubsystemLayout
    matrix: np.ndarray
    tol: InitVar[Tolerances] = DEFAULT

    def __post_init__(self, tol: Tolerances):
        d = self.layout.dim
        mat = _frozen_array(self.matrix, shape_hint=(d, d))
        object.__setattr__(self, "matrix", mat)
        herm = np.linalg.norm(mat - mat.conj().T)
        if herm > tol.herm:
            raise ValueError(f"matrix not Hermitian: residual {herm:.3e}")
        tr = np.trace(mat)
        if abs(tr - 1.0) > tol.norm:
            raise ValueError(f"trace {tr!r} is not 1 within {tol.norm}")
        lo = float(np.linalg.eigvalsh(mat)[0])
        if lo < -tol.psd:
            raise ValueError(f"matrix not PSD: lowest eigenvalue {lo:.3e}")

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def expectation(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(self.matrix @ op)))

    def reorder(self, new_labels: Sequence[str]) -> "DensityOperator":
        perm, new_layout = _permutation(self.layout, new_labels)
        n = len(self.layout.dims)
        tens = self.matrix.reshape(self.layout.dims * 2)
        tens = tens.transpose(tuple(perm) + tuple(p + n for p in perm))
        d = new_layout.dim
        return DensityOperator(new_layout, tens.reshape(d, d))

    def relabeled(self, mapping: dict[str, str]) -> "DensityOperator":
        return DensityOperator(self.layout.relabeled(mapping), self.matrix)


State = Union[StateVector, DensityOperator]


def _permutation(lay: SubsystemLayout, new_labels: Sequence[str]):
    if sorted(new_labels) != sorted(lay.labels):
        raise LayoutConflictError(
            f"reorder labels {list(new_labels)} must be a permutation of {list(lay.labels)}"
        )
    perm = tuple(lay.position(label) for label in new_labels)
    new_layout = SubsystemLayout(tuple(lay.subsystems[p] for p in perm))
    return perm, new_layout


@dataclass(frozen=True)
class SubsystemBasis:
    """Orthonormal vectors on one subsystem; may be a sub-basis."""

    subsystem: str
    vectors: tuple[np.ndarray, ...]
    tol: InitVar[Tolerances] = DEFAULT

    def __post_init__(self, tol: Tolerances):
        vecs = tuple(_frozen_array(v) for v in self.vectors)
        if not vecs:
            raise NonOrthonormalBasisError("basis needs at least one vector")
        dim = vecs[0].shape[0]
        if any(v.ndim != 1 or v.shape[0] != dim for v in vecs):
            raise DimensionMismatchError("basis vectors have inconsistent shapes")
        if len(vecs) > dim:
            raise NonOrthonormalBasisError(
                f"{len(vecs)} vectors cannot be orthonormal in dimension {dim}"
            )
        gram = np.array([[np.vdot(a, b) for b in vecs] for a in vecs])
        resid = np.linalg.norm(gram - np.eye(len(vecs)))
        if resid > tol.orth * max(1, len(vecs)):
            raise NonOrthonormalBasisError(f"orthonormality residual {resid:.3e}")
        object.__setattr__(self, "vectors", vecs)

    @property
    def dim(self) -> int:
        return self.vectors[0].shape[0]

    @property
    def is_complete(self) -> bool:
        return len(self.vectors) == self.dim

    def completed(self) -> "SubsystemBasis":
        """Deterministic completion to a full basis.

        Missing directions are filled by Gram-Schmidt over the canonical
        basis vectors, in index order, so the result is reproducible.
        """
        if self.is_complete:
            return self
        full = complete_orthonormal(list(self.vectors), self.dim)
        return SubsystemBasis(self.subsystem, tuple(full))


def complete_orthonormal(
    vectors: Sequence[np.ndarray],
    dim: int,
    candidates: Sequence[np.ndarray] | None = None,
) -> list[np.ndarray]:
    """Extend orthonormal ``vectors`` to a full orthonormal basis of ``dim``.

    Candidates are tried in order (canonical basis vectors by default,
    appended as a fallback otherwise); near-dependent ones are skipped.
    The input vectors come first in the result, untouched.
    """
    basis = [np.asarray(v, dtype=complex) for v in vectors]
    pool = list(candidates) if candidates is not None else []
    pool.extend(np.eye(dim, dtype=complex)[:, i] for i in range(dim))
    for cand in pool:
        if len(basis) == dim:
            break
        w = np.asarray(cand, dtype=complex)
        for _ in range(2):  # re-orthogonalize for numerical safety
            for b in basis:
                w = w - np.vdot(b, w) * b
        n = np.linalg.norm(w)
        if n > 1e-7:
            basis.append(w / n)
    if len(basis) != dim:
        raise NonOrthonormalBasisError("could not complete basis from candidates")
    return basis


def tensor(a: State, b: State) -> State:
    """Kronecker product of two states; layouts are concatenated in order."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        lay = a.layout.concat(b.layout)
        return StateVector(
            lay,
            np.kron(a.amplitudes, b.amplitudes),
            normalized=a.normalized and b.normalized,
        )
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        lay = a.layout.concat(b.layout)
        return DensityOperator(lay, np.kron(a.matrix, b.matrix))
    raise TypeError("tensor needs two StateVectors or two DensityOperators")


def _dense_matrix(state: State) -> np.ndarray:
    if isinstance(state, StateVector):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    return state.matrix


def partial_trace_matrix(
    matrix: np.ndarray, dims: Sequence[int], keep: Sequence[int]
) -> np.ndarray:
    """Partial trace of a raw matrix over all axes not in ``keep``.

    ``keep`` holds subsystem positions (in layout order); the result keeps
    them in that order.  No normalization or validation is performed.
    """
    dims = tuple(dims)
    n = len(dims)
    keep = sorted(keep)
    tens = matrix.reshape(dims + dims)
    in_idx = list(range(n)) + [i + n if i in keep else i for i in range(n)]
    out_idx = [i for i in keep] + [i + n for i in keep]
    reduced = np.einsum(tens, in_idx, out_idx)
    d_keep = int(np.prod([dims[i] for i in keep]))
    return reduced.reshape(d_keep, d_keep)


def partial_trace(state: State, traced: Iterable[str], tol: Tolerances = DEFAULT) -> DensityOperator:
    """Reduced density operator after tracing out the ``traced`` subsystems.

    The trace is preserved, so the input must be normalized for the result
    to be a valid density operator.
    """
    lay = state.layout
    traced = set(traced)
    unknown = traced - set(lay.labels)
    if unknown:
        raise LayoutConflictError(f"cannot trace unknown subsystems {sorted(unknown)}")
    keep = [i for i, label in enumerate(lay.labels) if label not in traced]
    if not keep:
        raise DegenerateLayoutError("tracing out every subsystem leaves no state")
    if isinstance(state, StateVector):
        dims = lay.dims
        perm = keep + [i for i in range(len(dims)) if i not in keep]
        tens = state.amplitudes.reshape(dims).transpose(perm)
        d_keep = int(np.prod([dims[i] for i in keep]))
        m = tens.reshape(d_keep, -1)
        reduced = m @ m.conj().T
    else:
        reduced = partial_trace_matrix(state.matrix, lay.dims, keep)
    new_layout = lay.restricted(set(lay.labels) - traced)
    return DensityOperator(new_layout, reduced, tol=tol)


def partial_scalar_product(bra: np.ndarray, subsystem: str, state: StateVector) -> StateVector:
    """Contract <bra| against one subsystem of a pure state.

    Returns the (generally unnormalized) coefficient vector on the remaining
    subsystems, in their original order.
    """
    lay = state.layout
    pos = lay.position(subsystem)
    bra = np.asarray(bra, dtype=complex)
    if bra.ndim != 1 or bra.shape[0] != lay.dims[pos]:
        raise DimensionMismatchError(
            f"bra of length {bra.shape} does not match subsystem "
            f"{subsystem!r} of dimension {lay.dims[pos]}"
        )
    tens = state.amplitudes.reshape(lay.dims)
    contracted = np.tensordot(bra.conj(), tens, axes=([0], [pos]))
    remaining = [label for label in lay.labels if label != subsystem]
    if not remaining:
        raise DegenerateLayoutError("partial scalar product leaves no subsystems")
    new_layout = lay.restricted(remaining)
    return StateVector(new_layout, contracted.reshape(-1), normalized=False)


def expand_in_basis(
    state: StateVector, basis: SubsystemBasis
) -> list[tuple[int, StateVector]]:
    """Expand a pure state in a basis of one subsystem.

    A sub-basis is first completed deterministically (``SubsystemBasis.completed``).
    Returns ``(n, coefficient_n)`` pairs over the full basis; the coefficients
    are unnormalized vectors on the remaining subsystems and satisfy
    ``sum_n tensor(coefficient_n, |n>) == state`` up to subsystem reordering.
    """
    full = basis.completed()
    if full.dim != state.layout.dim_of(full.subsystem):
        raise DimensionMismatchError(
            f"basis dimension {full.dim} does not match subsystem "
            f"{full.subsystem!r} in {state.layout}"
        )
    return [
        (n, partial_scalar_product(v, full.subsystem, state))
        for n, v in enumerate(full.vectors)
    ]


def embed_operator(op: np.ndarray, subsystem: str, lay: SubsystemLayout) -> np.ndarray:
    """Extend a one-subsystem operator by identities on all other factors."""
    op = np.asarray(op, dtype=complex)
    d = lay.dim_of(subsystem)
    if op.shape != (d, d):
        raise DimensionMismatchError(
            f"operator of shape {op.shape} does not fit subsystem "
            f"{subsystem!r} of dimension {d}"
        )
    factors = [
        op if label == subsystem else np.eye(dim, dtype=complex)
        for label, dim in lay.subsystems
    ]
    return reduce(np.kron, factors)


def basis_state(lay: SubsystemLayout, index: int | Sequence[int]) -> StateVector:
    """Canonical product-basis vector, by flat index or per-subsystem indices."""
    if not isinstance(index, (int, np.integer)):
        idx = 0
        for (label, dim), i in zip(lay.subsystems, index, strict=True):
            if not 0 <= i < dim:
                raise DimensionMismatchError(f"index {i} out of range for {label!r}")
            idx = idx * dim + i
        index = idx
    amps = np.zeros(lay.dim, dtype=complex)
    amps[index] = 1.0
    return StateVector(lay, amps)


def purity(rho: DensityOperator | np.ndarray) -> float:
    mat = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    return float(np.real(np.trace(mat @ mat)))


def trace_distance(a: DensityOperator | np.ndarray, b: DensityOperator | np.ndarray) -> float:
    """(1/2) * trace norm of the difference."""
    ma = a.matrix if isinstance(a, DensityOperator) else np.asarray(a)
    mb = b.matrix if isinstance(b, DensityOperator) else np.asarray(b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(ma - mb))))


def projector_distance(a: StateVector, b: StateVector) -> float:
    """Phase-insensitive distance between pure states: || |a><a| - |b><b| ||_F."""
    pa = np.outer(a.amplitudes, a.amplitudes.conj())
    pb = np.outer(b.amplitudes, b.amplitudes.conj())
    return float(np.linalg.norm(pa - pb))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary (QR of a Ginibre matrix with phase fix)."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    phases = np.diag(r).copy()
    phases /= np.abs(phases)
    return q * phases


def random_state(lay: SubsystemLayout, rng: np.random.Generator) -> StateVector:
    v = rng.standard_normal(lay.dim) + 1j * rng.standard_normal(lay.dim)
    return StateVector(lay, v / np.linalg.norm(v))


def random_density(
    lay: SubsystemLayout, rng: np.random.Generator, rank: int | None = None
) -> DensityOperator:
    """Random mixed state from a normalized Ginibre product G G^dag."""
    d = lay.dim
    r = rank if rank is not None else d
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    m = g @ g.conj().T
    return DensityOperator(lay, m / np.trace(m))
