"""Conic program representation, Hermitian embedding and solver adapter."""

from src.core.conic.program import (
    AffineExpr,
    ConeBlock,
    ConeKind,
    ConicBuilder,
    ConicProgram,
    HermitianVar,
    affine_sum,
    dump_program,
    embed_hermitian,
    extract_hermitian,
    hermitian_functional,
    smat,
    svec,
    svec_dim,
)
from src.core.conic.solver import ConicSolution, SolverSettings, SolveStatus, solve

__all__ = [
    "AffineExpr",
    "ConeBlock",
    "ConeKind",
    "ConicBuilder",
    "ConicProgram",
    "ConicSolution",
    "HermitianVar",
    "SolveStatus",
    "SolverSettings",
    "affine_sum",
    "dump_program",
    "embed_hermitian",
    "extract_hermitian",
    "hermitian_functional",
    "smat",
    "solve",
    "svec",
    "svec_dim",
]
