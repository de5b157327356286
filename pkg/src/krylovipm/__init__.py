"""Matrix-free interior point QP solver with Jacobi-PCG on the doubly augmented KKT system."""
from .ipm import IpmConfig, SolveResult, ipm_solve
from .kernels import BACKEND
from .kkt import KktOperator
from .linops import BfgsOperator, CsrMatrix, DiagonalOperator, SymmetricCsrOperator, SymmetricOperator
from .pcg import PcgConfig, pcg_solve
from .problem import IterateState, ProblemError, QpProblem
from .sqp import NlpProblem, SqpConfig, sqp_solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BfgsOperator", "CsrMatrix", "DiagonalOperator", "IpmConfig", "IterateState",
    "KktOperator", "NlpProblem", "PcgConfig", "ProblemError", "QpProblem", "SolveResult",
    "SqpConfig", "SymmetricCsrOperator", "SymmetricOperator", "ipm_solve", "pcg_solve", "sqp_solve",
]
