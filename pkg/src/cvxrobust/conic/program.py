"""Standard-form cone programs and an incremental builder.

Programs are stored as

    minimize    c'x
    subject to  Ax + s = b,   s in K

with K = {0}^zero_dim x R+^nonneg_dim x (PSD blocks under svec).  Equality
rows therefore read  Ax = b, nonnegative rows  b - Ax >= 0, and each PSD
block requires  smat(b_block - A_block x)  to be positive semidefinite.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import DomainError
from .cones import ConeSpec, svec_len


@dataclass
class ConicProgram:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: ConeSpec
    variable_map: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.A = sp.csc_matrix(self.A)
        m, n = self.A.shape
        if self.c.shape != (n,):
            raise DomainError(f"c has length {self.c.size}, expected {n}")
        if self.b.shape != (m,):
            raise DomainError(f"b has length {self.b.size}, expected {m}")
        if self.cones.total_dim != m:
            raise DomainError(
                f"cone dimension {self.cones.total_dim} != row count {m}"
            )

    @property
    def num_vars(self):
        return self.A.shape[1]

    def var_slice(self, name):
        try:
            return self.variable_map[name]
        except KeyError:
            raise DomainError(f"unknown variable {name!r}") from None

    def extract(self, x, name):
        return np.asarray(x)[self.var_slice(name)]


class ProgramBuilder:
    """Accumulates variables and cone rows, then assembles a ConicProgram."""

    def __init__(self):
        self._nvars = 0
        self._vars = {}
        self._obj = []  # (indices, values)
        # per-section COO triplets and rhs
        self._sections = {"eq": _Section(), "nonneg": _Section()}
        self._psd = []  # (side, Section)

    def add_var(self, name, size):
        if name in self._vars:
            raise DomainError(f"variable {name!r} already defined")
        sl = slice(self._nvars, self._nvars + int(size))
        self._vars[name] = sl
        self._nvars += int(size)
        return np.arange(sl.start, sl.stop)

    def var(self, name):
        return np.arange(self._vars[name].start, self._vars[name].stop)

    def add_objective(self, cols, vals):
        self._obj.append((np.asarray(cols, dtype=np.int64), np.asarray(vals, dtype=float)))

    def add_eq(self, cols, vals, rhs):
        """Single equality row: sum vals*x[cols] = rhs."""
        self._sections["eq"].add_row(cols, vals, rhs)

    def add_eq_rows(self, rows, cols, vals, rhs):
        """Block of equality rows; `rows` are local 0-based within the block."""
        self._sections["eq"].add_rows(rows, cols, vals, rhs)

    def add_nonneg(self, cols, vals, const):
        """Single inequality: const + sum vals*x[cols] >= 0."""
        self._sections["nonneg"].add_row(cols, np.negative(vals, dtype=float), const)

    def add_nonneg_rows(self, rows, cols, vals, const):
        self._sections["nonneg"].add_rows(rows, cols, -np.asarray(vals, dtype=float), const)

    def add_psd_block(self, side, rows, cols, vals, const):
        """LMI block: smat(const + E x) PSD, rows indexing svec entries.

        `rows`, `cols`, `vals` give the svec-space coefficient matrix E in COO
        form; `const` is the svec of the constant term (length side*(side+1)/2).
        """
        const = np.asarray(const, dtype=float)
        if const.size != svec_len(side):
            raise DomainError("PSD block constant has wrong svec length")
        sec = _Section()
        sec.add_rows(rows, cols, -np.asarray(vals, dtype=float), const)
        sec.nrows = svec_len(side)
        self._psd.append((int(side), sec))

    def build(self):
        eq, nn = self._sections["eq"], self._sections["nonneg"]
        rows, cols, vals, b = [], [], [], []
        offset = 0
        for sec in [eq, nn] + [s for _, s in self._psd]:
            r, c, v, rhs = sec.assemble()
            rows.append(r + offset)
            cols.append(c)
            vals.append(v)
            b.append(rhs)
            offset += sec.nrows
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(offset, self._nvars),
        ).tocsc()
        cvec = np.zeros(self._nvars)
        for idx, val in self._obj:
            np.add.at(cvec, idx, val)
        cones = ConeSpec(eq.nrows, nn.nrows, tuple(s for s, _ in self._psd))
        return ConicProgram(cvec, A, np.concatenate(b), cones, dict(self._vars))


class _Section:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = []
        self.nrows = 0

    def add_row(self, cols, vals, rhs):
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        vals = np.atleast_1d(np.asarray(vals, dtype=float))
        self.rows.append(np.full(cols.size, self.nrows, dtype=np.int64))
        self.cols.append(cols)
        self.vals.append(vals)
        self.rhs.append(np.array([float(rhs)]))
        self.nrows += 1

    def add_rows(self, rows, cols, vals, rhs):
        rows = np.asarray(rows, dtype=np.int64)
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        self.rows.append(rows + self.nrows)
        self.cols.append(np.asarray(cols, dtype=np.int64))
        self.vals.append(np.asarray(vals, dtype=float))
        self.rhs.append(rhs)
        self.nrows += rhs.size

    def assemble(self):
        if not self.rows:
            z = np.zeros(0)
            return z.astype(np.int64), z.astype(np.int64), z, np.zeros(self.nrows)
        return (
            np.concatenate(self.rows),
            np.concatenate(self.cols),
            np.concatenate(self.vals),
            np.concatenate(self.rhs),
        )


def dump_program(prog, path):
    """Write (c, A, b, cones) in a plain text COO format for external cross-checks.

    Format: header `conicprogram 1`, then `dims m n`, `cones z l s1 s2 ...`,
    `var name start stop` lines, then `c i v`, `b i v`, `A i j v` nonzeros.
    """
    A = prog.A.tocoo()
    with open(path, "w") as fh:
        fh.write("conicprogram 1\n")
        fh.write(f"dims {A.shape[0]} {A.shape[1]}\n")
        psd = " ".join(str(s) for s in prog.cones.psd_blocks)
        fh.write(f"cones {prog.cones.zero_dim} {prog.cones.nonneg_dim} {psd}".rstrip() + "\n")
        for name, sl in prog.variable_map.items():
            fh.write(f"var {name} {sl.start} {sl.stop}\n")
        for i in np.nonzero(prog.c)[0]:
            fh.write(f"c {i} {float(prog.c[i])!r}\n")
        for i in np.nonzero(prog.b)[0]:
            fh.write(f"b {i} {float(prog.b[i])!r}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"A {i} {j} {float(v)!r}\n")


def load_program(path):
    """Inverse of :func:`dump_program`."""
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["conicprogram", "1"]:
            raise DomainError(f"{path}: not a conicprogram v1 file")
        m = n = None
        cones = None
        vmap = {}
        c = b = None
        rows, cols, vals = [], [], []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            tag = parts[0]
            if tag == "dims":
                m, n = int(parts[1]), int(parts[2])
                c, b = np.zeros(n), np.zeros(m)
            elif tag == "cones":
                cones = ConeSpec(int(parts[1]), int(parts[2]), tuple(int(s) for s in parts[3:]))
            elif tag == "var":
                vmap[parts[1]] = slice(int(parts[2]), int(parts[3]))
            elif tag == "c":
                c[int(parts[1])] = float(parts[2])
            elif tag == "b":
                b[int(parts[1])] = float(parts[2])
            elif tag == "A":
                rows.append(int(parts[1]))
                cols.append(int(parts[2]))
                vals.append(float(parts[3]))
            else:
                raise DomainError(f"{path}: unknown record {tag!r}")
    A = sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsc()
    return ConicProgram(c, A, b, cones, vmap)
