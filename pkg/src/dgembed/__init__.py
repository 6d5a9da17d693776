"""dgembed: 3D structures from sparse interval distance constraints.

The pipeline embeds a graph of atoms whose edges carry [lower, upper]
distance intervals: pivot-MDS initial layout, maxent-stress majorization
(Laplacian solves with an entropy term that keeps unconstrained pairs
apart), then simulated-annealing and greedy local refinement. Quality is
scored by LDME (constraint fit) and RMSD against a reference structure.
"""

from .core import (DistanceConstraint, Graph, Instance, InstanceDiagnostics,
                   SolverConfig, ValidationError, build_graph, check_embedding,
                   confidence_weight, make_instance, midpoint_distances,
                   validate_instance)
from .metrics import (SuperpositionResult, ViolationStats, edge_error,
                      interval_errors, kabsch_superpose, ldme, rmsd,
                      violation_stats, weighted_total_error)
from .linalg import (CGReport, LaplacianSystem, Octree, assemble_laplacian,
                     build_octree, entropy_force, entropy_forces, solve_cg)
from .initlayout import layout_hypersphere, layout_pivot_mds, layout_random_cube
from .solver import (SolveDivergence, SolveTrace, lazy_entropy_due, maxent_solve,
                     maxent_step, stress_value)
from .localopt import (SAConfig, adjust_length, local_error, local_force_step,
                       refine_workflow, sa_accept, simple_local_opt,
                       simulated_annealing)
from .instances import (AtomSet, InstanceFormatError, PDBParseError,
                        contact_edges, gen_bonds_instance, gen_normal_instance,
                        gen_weighted_instance, infer_bonds, parse_pdb_atoms,
                        read_instance, read_xyz, synthetic_chain, write_instance,
                        write_xyz)
from .bench import (ExperimentSpec, Report, ReportRow, emit_report,
                    initial_layout, parse_experiment_spec, reconstruct,
                    run_experiment)

__version__ = "0.1.0"

__all__ = [
    "AtomSet", "CGReport", "DistanceConstraint", "ExperimentSpec", "Graph",
    "Instance", "InstanceDiagnostics", "InstanceFormatError", "LaplacianSystem",
    "Octree", "PDBParseError", "Report", "ReportRow", "SAConfig",
    "SolveDivergence", "SolveTrace", "SolverConfig", "SuperpositionResult",
    "ValidationError", "ViolationStats", "adjust_length", "assemble_laplacian",
    "build_graph", "build_octree", "check_embedding", "confidence_weight",
    "contact_edges", "edge_error", "emit_report", "entropy_force",
    "entropy_forces", "gen_bonds_instance", "gen_normal_instance",
    "gen_weighted_instance", "infer_bonds", "initial_layout", "interval_errors",
    "kabsch_superpose", "layout_hypersphere", "layout_pivot_mds",
    "layout_random_cube", "lazy_entropy_due", "ldme", "local_error",
    "local_force_step", "make_instance", "maxent_solve", "maxent_step",
    "midpoint_distances", "parse_experiment_spec", "parse_pdb_atoms",
    "read_instance", "read_xyz", "reconstruct", "refine_workflow", "rmsd",
    "run_experiment", "sa_accept", "simple_local_opt", "simulated_annealing",
    "solve_cg", "stress_value", "synthetic_chain", "validate_instance",
    "violation_stats", "weighted_total_error", "write_instance", "write_xyz",
]
