"""Reader and writer for the line-oriented ``.pomdp`` text format.

Supported: the ``discount/values/states/actions/observations/start``
preamble (counts or names; ``start`` as a vector, ``uniform``, a single
state or ``include:``/``exclude:`` lists) and ``T:``/``O:``/``R:`` entries in
all three granularities (single value, row, matrix) with ``*`` wildcards
and the ``uniform``/``identity`` shorthands.  Rewards depending on the
next state or observation are folded into their expectation, since
:class:`TabularPOMDP` holds R(s, a).  The horizon has no slot in the
format and is carried in a ``# horizon:`` comment.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .exceptions import SpecFileError
from .pomdp import TabularPOMDP

_PREAMBLE = ("discount", "values", "states", "actions", "observations", "start")


def _names(prefix, labels):
    out = []
    for i, label in enumerate(labels):
        clean = re.sub(r"[^A-Za-z0-9_\-]", "_", str(label))
        tag = f"{prefix}{i}"
        # names written by this module come back unchanged
        out.append(clean if clean == tag or clean.startswith(tag + "_") else f"{tag}_{clean}")
    return out


def _num(x):
    return repr(float(x))


def dumps(model):
    """Serialize ``model`` with full float precision."""
    S = _names("s", model.state_labels)
    A = _names("a", model.action_labels)
    Z = _names("o", model.observation_labels)
    lines = [f"# horizon: {model.horizon}",
             f"discount: {_num(model.discount)}",
             "values: reward",
             "states: " + " ".join(S),
             "actions: " + " ".join(A),
             "observations: " + " ".join(Z),
             "start: " + " ".join(_num(p) for p in model.initial_belief),
             ""]
    for a, t in enumerate(model.transition):
        coo = t.tocoo()
        for s, s2, p in sorted(zip(coo.row, coo.col, coo.data)):
            lines.append(f"T: {A[a]} : {S[s]} : {S[s2]} {_num(p)}")
    for a, o in enumerate(model.observation):
        coo = o.tocoo()
        for s2, z, p in sorted(zip(coo.row, coo.col, coo.data)):
            lines.append(f"O: {A[a]} : {S[s2]} : {Z[z]} {_num(p)}")
    R = np.asarray(model.reward)
    for s, a in zip(*np.nonzero(R)):
        lines.append(f"R: {A[a]} : {S[s]} : * : * {_num(R[s, a])}")
    return "\n".join(lines) + "\n"


def write_pomdp(model, path):
    path = Path(path)
    try:
        path.write_text(dumps(model))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _tokenize(text):
    tokens = []
    horizon = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line, _, comment = raw.partition("#")
        m = re.match(r"\s*horizon\s*:\s*(\d+)", comment)
        if m and horizon is None:
            horizon = int(m.group(1))
        for tok in line.replace(":", " : ").split():
            tokens.append((tok, lineno))
    return tokens, horizon


class _Parser:
    def __init__(self, text, path):
        self.tokens, self.horizon = _tokenize(text)
        self.i = 0
        self.path = path
        self.discount = None
        self.cost = False
        self.S = self.A = self.Z = None
        self.start = None
        self.T = self.O = None
        self.R_sa = None
        self.R_full = []

    def error(self, msg, line=None):
        if line is None:
            line = self.tokens[min(self.i, len(self.tokens) - 1)][1] if self.tokens else None
        return SpecFileError(msg, path=self.path, line=line)

    def peek(self, k=0):
        j = self.i + k
        return self.tokens[j][0] if j < len(self.tokens) else None

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_colon(self):
        if self.peek() != ":":
            raise self.error(f"expected ':' but found {self.peek()!r}")
        self.i += 1

    def at_keyword(self):
        tok = self.peek()
        return tok in ("T", "O", "R") + _PREAMBLE and self.peek(1) == ":"

    def rest(self):
        out = []
        while self.peek() is not None and not self.at_keyword():
            if self.peek(1) == ":" or self.peek() == ":":
                raise self.error(f"unexpected token {self.peek()!r}")
            out.append(self.take())
        return out

    def numbers(self, toks):
        try:
            return [float(t) for t, _ in toks]
        except ValueError as exc:
            raise self.error(f"expected numbers: {exc}", line=toks[0][1] if toks else None) from None

    def index(self, tok, names, what):
        if tok == "*":
            return list(range(len(names)))
        if tok in names:
            return [names.index(tok)]
        if tok.isdigit() and int(tok) < len(names):
            return [int(tok)]
        raise self.error(f"unknown {what} {tok!r}")

    def space(self):
        toks = self.rest()
        if len(toks) == 1 and toks[0][0].isdigit():
            return [str(i) for i in range(int(toks[0][0]))]
        names = [t for t, _ in toks]
        if not names:
            raise self.error("empty state/action/observation list")
        return names

    def parse(self):
        while self.peek() is not None:
            tok, line = self.take()
            if tok not in ("T", "O", "R") + _PREAMBLE:
                raise self.error(f"unexpected token {tok!r}", line=line)
            self.expect_colon()
            if tok == "discount":
                self.discount = self.numbers(self.rest())[0]
            elif tok == "values":
                kind = self.rest()
                if not kind or kind[0][0] not in ("reward", "cost"):
                    raise self.error("values must be 'reward' or 'cost'", line=line)
                self.cost = kind[0][0] == "cost"
            elif tok == "states":
                self.S = self.space()
            elif tok == "actions":
                self.A = self.space()
            elif tok == "observations":
                self.Z = self.space()
            elif tok == "start":
                self.parse_start(line)
            else:
                self.ensure_tables(line)
                getattr(self, f"parse_{tok}")(line)
        return self.finish()

    def ensure_tables(self, line):
        if self.S is None or self.A is None or self.Z is None:
            raise self.error("states, actions and observations must precede T/O/R entries", line=line)
        if self.T is None:
            nS, nA, nZ = len(self.S), len(self.A), len(self.Z)
            self.T = np.zeros((nA, nS, nS))
            self.O = np.zeros((nA, nS, nZ))
            self.R_sa = np.zeros((nS, nA))

    def parse_start(self, line):
        if self.S is None:
            raise self.error("start given before states", line=line)
        n = len(self.S)
        if self.peek() in ("include", "exclude") and self.peek(1) == ":":
            mode = self.take()[0]
            self.expect_colon()
            chosen = set()
            for tok, _ in self.rest():
                chosen.update(self.index(tok, self.S, "state"))
            if mode == "exclude":
                chosen = set(range(n)) - chosen
            self.start = np.zeros(n)
            self.start[sorted(chosen)] = 1.0 / len(chosen)
            return
        toks = self.rest()
        if len(toks) == 1 and toks[0][0] == "uniform":
            self.start = np.full(n, 1.0 / n)
        elif len(toks) == 1 and (not _is_number(toks[0][0]) or n > 1 and toks[0][0].isdigit()):
            self.start = np.zeros(n)
            self.start[self.index(toks[0][0], self.S, "state")[0]] = 1.0
        else:
            vals = self.numbers(toks)
            if len(vals) != n:
                raise self.error(f"start has {len(vals)} entries, expected {n}", line=line)
            self.start = np.array(vals)

    def selectors(self, spaces, what):
        """Read up to len(spaces) colon-separated selectors."""
        sel = []
        for k, (names, label) in enumerate(zip(spaces, what)):
            if k > 0:
                if self.peek() != ":":
                    break
                self.i += 1
            tok, _ = self.take()
            sel.append(self.index(tok, names, label))
        return sel

    def _fill(self, table, sel, line, n_rows, n_cols):
        a_sel = sel[0]
        toks = self.rest()
        if len(sel) == 3:
            vals = self.numbers(toks)
            if len(vals) != 1:
                raise self.error("expected a single probability", line=line)
            for a in a_sel:
                for r in sel[1]:
                    for c in sel[2]:
                        table[a, r, c] = vals[0]
            return
        if len(sel) == 2:
            row = np.full(n_cols, 1.0 / n_cols) if _word(toks, "uniform") else np.array(self.numbers(toks))
            if row.shape != (n_cols,):
                raise self.error(f"expected {n_cols} values", line=line)
            for a in a_sel:
                for r in sel[1]:
                    table[a, r] = row
            return
        if _word(toks, "uniform"):
            mat = np.full((n_rows, n_cols), 1.0 / n_cols)
        elif _word(toks, "identity"):
            if n_rows != n_cols:
                raise self.error("identity needs a square table", line=line)
            mat = np.eye(n_rows)
        else:
            vals = np.array(self.numbers(toks))
            if vals.size != n_rows * n_cols:
                raise self.error(f"expected {n_rows * n_cols} values", line=line)
            mat = vals.reshape(n_rows, n_cols)
        for a in a_sel:
            table[a] = mat

    def parse_T(self, line):
        sel = self.selectors([self.A, self.S, self.S], ["action", "state", "state"])
        self._fill(self.T, sel, line, len(self.S), len(self.S))

    def parse_O(self, line):
        sel = self.selectors([self.A, self.S, self.Z], ["action", "state", "observation"])
        self._fill(self.O, sel, line, len(self.S), len(self.Z))

    def parse_R(self, line):
        sel = self.selectors([self.A, self.S, self.S, self.Z], ["action", "state", "state", "observation"])
        toks = self.rest()
        vals = np.array(self.numbers(toks))
        nS, nZ = len(self.S), len(self.Z)
        shape = {4: (1,), 3: (nZ,), 2: (nS, nZ)}.get(len(sel))
        if shape is None:
            raise self.error("R entries need at least action and state", line=line)
        if vals.size != int(np.prod(shape)):
            raise self.error(f"expected {int(np.prod(shape))} reward values", line=line)
        vals = vals.reshape(shape)
        full_wild = len(sel) == 4 and len(sel[2]) == nS and len(sel[3]) == nZ
        if full_wild:
            for a in sel[0]:
                for s in sel[1]:
                    self.R_sa[s, a] = vals[0]
            return
        self.R_full.append((sel, vals, line))

    def finish(self):
        if self.T is None:
            raise self.error("file defines no T/O/R entries", line=None)
        R = self.R_sa.copy()
        if self.R_full:
            nS, nZ = len(self.S), len(self.Z)
            # later entries override earlier ones, then R(s,a,s',o) is folded into E[R | s, a]
            R4 = np.broadcast_to(R.T[:, :, None, None], (len(self.A), nS, nS, nZ)).copy()
            for sel, vals, _ in self.R_full:
                s2_sel = sel[2] if len(sel) > 2 else list(range(nS))
                o_sel = sel[3] if len(sel) > 3 else list(range(nZ))
                block = np.broadcast_to(vals, (nS, nZ))[np.ix_(s2_sel, o_sel)]
                for a in sel[0]:
                    for s in sel[1]:
                        R4[a, s][np.ix_(s2_sel, o_sel)] = block
            R = np.einsum("ast,atz,astz->sa", self.T, self.O, R4)
        if self.cost:
            R = -R
        start = self.start if self.start is not None else np.full(len(self.S), 1.0 / len(self.S))
        kwargs = {} if self.horizon is None else {"horizon": self.horizon}
        return TabularPOMDP(
            transition=self.T, reward=R, observation=self.O, initial_belief=start,
            discount=1.0 if self.discount is None else self.discount,
            state_labels=tuple(self.S), action_labels=tuple(self.A), observation_labels=tuple(self.Z),
            **kwargs,
        )


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _word(toks, word):
    return len(toks) == 1 and toks[0][0] == word


def loads(text, path=None):
    """Parse ``.pomdp`` text into a :class:`TabularPOMDP`; raises SpecFileError."""
    return _Parser(text, path).parse()


def read_pomdp(path):
    path = Path(path)
    return loads(path.read_text(), path=path)
