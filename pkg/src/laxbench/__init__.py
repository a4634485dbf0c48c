"""laxbench: exact loop-algebra verification, symbolic zero-curvature
derivation of the coupled NLS family, and numerical conservation-law
diagnostics (split-step propagation, transverse monodromy)."""

__version__ = "0.1.0"

from .scalars import QQi, Scalar  # noqa: F401
from .loop_algebra import (  # noqa: F401
    LoopElement, LoopGenerator, MappingTable, Relation, bracket,
    check_relations, evaluate_word, gen, jacobi_scan, kernel_member,
    load_relations, search_conventions,
)
from .diffpoly import (  # noqa: F401
    CNLSSystem, DiffPoly, JetVar, KMatrix, MatrixDP, beta, jet, substitute,
    total_dt, total_dx,
)
from .zero_curvature import (  # noqa: F401
    CANONICAL_CONVENTION, ConnectionAnsatz, Convention, CoefficientSolution,
    LaxPair, ansatz_constraints, build_lax, curvature, derive_pde,
    verify_proposition, verify_zero_curvature,
)
from .cnls_sim import (  # noqa: F401
    FieldState, Grid, SimConfig, conserved, manakov_soliton, run, step,
)
from .lax_numeric import (  # noqa: F401
    Monodromy, invariant_scan, monodromy, residual_fd, sample_lax,
)
