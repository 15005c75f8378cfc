"""Lie algebra arithmetic for a model pair (g, p).

The basis is adapted to p: the first ``p_start`` vectors span the section
sigma of g/p and the remaining ones span p. Curvature values live in
V = Lambda^2(g/p)* (x) g, stored as arrays ``phi[a, b, k]`` with ``a, b`` over
the sigma slots and ``k`` over the whole of g. Elements of
Hom((x)^m g, V) are arrays of shape ``(dim_g,) * m + (s, s, dim_g)``.
"""
import json
import logging
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.linalg import expm, null_space
from scipy.sparse.linalg import LinearOperator

from cartan_kill.exceptions import AlgebraDefinitionError
from cartan_kill.schemas import AlgebraFile

logger = logging.getLogger(__name__)

JACOBI_TOL = 1e-12


def _apply_on_axis(matrix: np.ndarray, array: np.ndarray, axis: int) -> np.ndarray:
    """Contract ``matrix`` (out, in) with one axis of ``array``"""
    return np.moveaxis(np.tensordot(matrix, array, axes=(1, axis)), 0, axis)


class LieAlgebraSpec:
    def __init__(
        self,
        name: str,
        structure: Union[np.ndarray, Sequence],
        p_start: int,
        matrices: Optional[Sequence[np.ndarray]] = None,
        labels: Optional[List[str]] = None,
        validate: bool = True,
    ):
        c = np.array(structure, dtype=float)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]):
            raise AlgebraDefinitionError(f"Structure constants must be a cube, got shape {c.shape}")
        if not 0 <= p_start <= c.shape[0]:
            raise AlgebraDefinitionError(f"p_start {p_start} outside 0..{c.shape[0]}")
        c.setflags(write=False)

        self.name = name
        self.dim_g = c.shape[0]
        self.p_start = p_start
        self._structure = c
        self.matrices = None if matrices is None else [np.array(m, dtype=float) for m in matrices]
        self.labels = labels or [f"e{i}" for i in range(self.dim_g)]

        if validate:
            self.validate()

    @property
    def structure(self) -> np.ndarray:
        return self._structure

    @property
    def sigma_dim(self) -> int:
        return self.p_start

    @property
    def p_dim(self) -> int:
        return self.dim_g - self.p_start

    def __repr__(self) -> str:
        return f"LieAlgebraSpec(name={self.name!r}, dim_g={self.dim_g}, p_start={self.p_start})"

    # ------------------------------------------------------------------ checks

    def jacobi_residual(self) -> float:
        """Largest component of [e_i,[e_j,e_k]] + cyclic over all basis triples"""
        c = self._structure
        # [e_j, e_k] = c[j,k,l] e_l ; [e_i, e_l] = c[i,l,m] e_m
        term = np.einsum("jkl,ilm->ijkm", c, c)
        cyclic = term + np.transpose(term, (1, 2, 0, 3)) + np.transpose(term, (2, 0, 1, 3))
        return float(np.max(np.abs(cyclic))) if cyclic.size else 0.0

    def antisymmetry_residual(self) -> float:
        c = self._structure
        return float(np.max(np.abs(c + np.transpose(c, (1, 0, 2))))) if c.size else 0.0

    def is_subalgebra_p(self) -> bool:
        """Brackets of p-basis vectors have no component on the sigma slots"""
        s = self.p_start
        return bool(np.all(self._structure[s:, s:, :s] == 0))

    def validate(self, require_effective: bool = True) -> None:
        if self.antisymmetry_residual() != 0.0:
            raise AlgebraDefinitionError(f"{self.name}: structure constants are not antisymmetric")
        scale = max(1.0, float(np.max(np.abs(self._structure))) ** 2) if self._structure.size else 1.0
        residual = self.jacobi_residual()
        if residual > JACOBI_TOL * scale:
            raise AlgebraDefinitionError(
                f"{self.name}: Jacobi identity fails", {"jacobi_residual": residual}
            )
        if not self.is_subalgebra_p():
            raise AlgebraDefinitionError(f"{self.name}: p is not a subalgebra")
        if require_effective:
            ideal = self.maximal_ideal_in_p()
            if ideal.shape[1] > 0:
                raise AlgebraDefinitionError(
                    f"{self.name}: p contains a nonzero ideal of g",
                    {"ideal_dim": int(ideal.shape[1])},
                )

    # -------------------------------------------------------------- arithmetic

    def _check_vector(self, X) -> np.ndarray:
        v = np.asarray(X)
        if v.shape != (self.dim_g,):
            raise ValueError(f"Expected a vector of length {self.dim_g}, got shape {v.shape}")
        return v

    def bracket(self, X, Y) -> np.ndarray:
        """[X, Y] by contraction with the structure constants"""
        X = self._check_vector(X)
        Y = self._check_vector(Y)
        return np.einsum("i,j,ijk->k", X, Y, self._structure)

    def ad_matrix(self, X) -> np.ndarray:
        """Matrix of ad(X), so that ad_matrix(X) @ Y == bracket(X, Y)"""
        X = self._check_vector(X)
        return np.einsum("i,ijk->kj", X, self._structure)

    def in_p(self, X, tol: float = 1e-12) -> bool:
        X = self._check_vector(X)
        return bool(np.all(np.abs(X[: self.p_start]) <= tol))

    def adjoint_of_group_element(self, X) -> np.ndarray:
        """Ad(exp X) = exp(ad X) for X in p"""
        X = self._check_vector(X)
        if not self.in_p(X):
            raise ValueError("adjoint_of_group_element expects an element of p")
        return expm(self.ad_matrix(X))

    def quotient_block(self, adP: np.ndarray) -> np.ndarray:
        """Action induced on g/p in sigma coordinates"""
        s = self.p_start
        return adP[:s, :s]

    # ---------------------------------------------------------- representations

    def hom_shape(self, m: int) -> tuple:
        s = self.p_start
        return (self.dim_g,) * m + (s, s, self.dim_g)

    def act_on_hom(self, adP: np.ndarray, J: np.ndarray, m: int) -> np.ndarray:
        """p . J = p o J o Ad^m p^{-1}, with p acting on V through (Ad p, Ad-bar p)"""
        J = np.asarray(J, dtype=float).reshape(self.hom_shape(m))
        ad_inv = np.linalg.inv(adP)
        q_inv = np.linalg.inv(self.quotient_block(adP))
        out = J
        for axis in range(m):
            out = _apply_on_axis(ad_inv.T, out, axis)
        out = _apply_on_axis(q_inv.T, out, m)
        out = _apply_on_axis(q_inv.T, out, m + 1)
        return _apply_on_axis(adP, out, m + 2)

    def act_on_V(self, adP: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return self.act_on_hom(adP, phi, 0)

    def rep_on_hom(self, m: int, adP: np.ndarray) -> LinearOperator:
        """Linear map on the flattened Hom((x)^m g, V) induced by adP"""
        size = int(np.prod(self.hom_shape(m)))
        adP = np.array(adP, dtype=float)
        return LinearOperator(
            shape=(size, size),
            matvec=lambda v: self.act_on_hom(adP, v, m).ravel(),
            dtype=float,
        )

    def rep_on_V(self, adP: np.ndarray) -> LinearOperator:
        return self.rep_on_hom(0, adP)

    def infinitesimal_on_hom(self, X, J: np.ndarray, m: int) -> np.ndarray:
        """Derivative at t = 0 of exp(tX) . J for X in p"""
        ad_x = self.ad_matrix(X)
        ad_bar = self.quotient_block(ad_x)
        J = np.asarray(J, dtype=float).reshape(self.hom_shape(m))
        out = _apply_on_axis(ad_x, J, m + 2)
        for axis in range(m):
            out = out - _apply_on_axis(ad_x.T, J, axis)
        out = out - _apply_on_axis(ad_bar.T, J, m)
        out = out - _apply_on_axis(ad_bar.T, J, m + 1)
        return out

    def infinitesimal_on_V(self, X, phi: np.ndarray) -> np.ndarray:
        return self.infinitesimal_on_hom(X, phi, 0)

    # ------------------------------------------------------------------ ideals

    def maximal_ideal_in_p(self) -> np.ndarray:
        """Orthonormal basis (columns) of the largest ideal of g contained in p"""
        basis = np.eye(self.dim_g)[:, self.p_start:]
        ad_basis = [self.ad_matrix(e) for e in np.eye(self.dim_g)]
        while basis.shape[1] > 0:
            projector = np.eye(self.dim_g) - basis @ basis.T
            constraint = np.vstack([projector @ ad @ basis for ad in ad_basis])
            kernel = null_space(constraint, rcond=1e-10)
            if kernel.shape[1] == basis.shape[1]:
                break
            basis = basis @ kernel
        return basis

    # ------------------------------------------------------------ matrix forms

    def hat(self, X) -> np.ndarray:
        if self.matrices is None:
            raise ValueError(f"{self.name} has no matrix representation")
        X = self._check_vector(X)
        return np.tensordot(X, np.array(self.matrices), axes=(0, 0))

    def vee(self, M: np.ndarray) -> np.ndarray:
        if self.matrices is None:
            raise ValueError(f"{self.name} has no matrix representation")
        A = np.array([m.ravel() for m in self.matrices]).T
        coords, *_ = np.linalg.lstsq(A, np.asarray(M).ravel(), rcond=None)
        return coords

    @classmethod
    def from_matrix_basis(
        cls,
        name: str,
        matrices: Sequence[np.ndarray],
        p_start: int,
        labels: Optional[List[str]] = None,
    ) -> "LieAlgebraSpec":
        """Structure constants from commutators of a faithful matrix basis"""
        mats = [np.array(m, dtype=float) for m in matrices]
        dim = len(mats)
        A = np.array([m.ravel() for m in mats]).T
        c = np.zeros((dim, dim, dim))
        for i in range(dim):
            for j in range(dim):
                comm = mats[i] @ mats[j] - mats[j] @ mats[i]
                coords, *_ = np.linalg.lstsq(A, comm.ravel(), rcond=None)
                if np.linalg.norm(A @ coords - comm.ravel()) > 1e-10:
                    raise AlgebraDefinitionError(f"{name}: matrix basis is not closed under commutators")
                c[i, j] = np.round(coords, 12)
        return cls(name, c, p_start, matrices=mats, labels=labels)

    # -------------------------------------------------------------------- I/O

    @classmethod
    def from_file(cls, data: Union[str, Path, dict]) -> "LieAlgebraSpec":
        """Load the JSON algebra definition {name, dim, brackets, p_start}"""
        try:
            if isinstance(data, dict):
                payload = data
            else:
                payload = json.loads(Path(data).read_text(encoding="utf-8"))
            spec = AlgebraFile(**payload)
        except Exception as e:
            logger.error(f"Failed to read algebra definition: {e}")
            raise AlgebraDefinitionError(f"Could not read algebra definition: {str(e)}")

        c = np.zeros((spec.dim, spec.dim, spec.dim))
        for i, j, k, value in spec.brackets:
            if c[j, i, k] != 0.0 and c[j, i, k] != -value:
                raise AlgebraDefinitionError(f"Conflicting entries for [{i},{j}] and [{j},{i}]")
            c[i, j, k] = value
            c[j, i, k] = -value
        return cls(spec.name, c, spec.p_start)

    def to_file_payload(self) -> Dict:
        brackets = []
        for i, j in combinations(range(self.dim_g), 2):
            for k in range(self.dim_g):
                if self._structure[i, j, k] != 0.0:
                    brackets.append([i, j, k, float(self._structure[i, j, k])])
        return {"name": self.name, "dim": self.dim_g, "brackets": brackets, "p_start": self.p_start}


# ---------------------------------------------------------------- built-ins

def _unit(size: int, i: int, j: int) -> np.ndarray:
    m = np.zeros((size, size))
    m[i, j] = 1.0
    return m


def rotation_pairs(n: int) -> List[tuple]:
    return list(combinations(range(n), 2))


def rotation_generator(n: int, i: int, j: int) -> np.ndarray:
    """Infinitesimal rotation taking e_i towards e_j"""
    return _unit(n, j, i) - _unit(n, i, j)


def euc(n: int) -> LieAlgebraSpec:
    """euc(n) = R^n x| so(n) as (n+1)x(n+1) matrices, translations first"""
    size = n + 1
    mats = [_unit(size, i, n) for i in range(n)]
    labels = [f"t{i + 1}" for i in range(n)]
    for i, j in rotation_pairs(n):
        r = np.zeros((size, size))
        r[:n, :n] = rotation_generator(n, i, j)
        mats.append(r)
        labels.append(f"r{i + 1}{j + 1}")
    return LieAlgebraSpec.from_matrix_basis(f"euc({n})", mats, p_start=n, labels=labels)


def so3(p_start: int = 2) -> LieAlgebraSpec:
    mats = [rotation_generator(3, 1, 2), rotation_generator(3, 2, 0), rotation_generator(3, 0, 1)]
    return LieAlgebraSpec.from_matrix_basis("so(3)", mats, p_start=p_start, labels=["L1", "L2", "L3"])


def se2(p_start: int = 2) -> LieAlgebraSpec:
    spec = euc(2)
    return LieAlgebraSpec.from_matrix_basis("se(2)", spec.matrices, p_start=p_start, labels=spec.labels)


def heisenberg(p_start: int = 2) -> LieAlgebraSpec:
    # basis (X, Z, Y) with [X, Y] = Z; p = span{Y} contains no ideal
    mats = [_unit(3, 0, 1), _unit(3, 0, 2), _unit(3, 1, 2)]
    return LieAlgebraSpec.from_matrix_basis("heisenberg", mats, p_start=p_start, labels=["X", "Z", "Y"])


def sl2(p_start: int = 1) -> LieAlgebraSpec:
    # basis (E, H, F); p = span{H, F} is a Borel subalgebra
    E = _unit(2, 0, 1)
    H = np.diag([1.0, -1.0])
    F = _unit(2, 1, 0)
    return LieAlgebraSpec.from_matrix_basis("sl(2)", [E, H, F], p_start=p_start, labels=["E", "H", "F"])


def abelian(n: int) -> LieAlgebraSpec:
    mats = [_unit(n + 1, i, n) for i in range(n)]
    return LieAlgebraSpec.from_matrix_basis(
        f"R^{n}", mats, p_start=n, labels=[f"a{i + 1}" for i in range(n)]
    )


BUILTIN_ALGEBRAS = {
    "so3": so3,
    "se2": se2,
    "heisenberg": heisenberg,
    "sl2": sl2,
}
