from .cones import ConeSpec, project_psd, smat, svec, svec_len
from .program import ConicProgram, ProgramBuilder, dump_program, load_program
from .solver import ConicSolution, SolverSettings, solve

__all__ = [
    "ConeSpec",
    "ConicProgram",
    "ConicSolution",
    "ProgramBuilder",
    "SolverSettings",
    "dump_program",
    "load_program",
    "project_psd",
    "smat",
    "solve",
    "svec",
    "svec_len",
]
