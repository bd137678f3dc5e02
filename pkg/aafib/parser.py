"""
Cassandra `.pomdp` reader and writer

Parsing runs in two passes: `read_source` tokenizes the text and splits it
into a resolved preamble plus raw body statements, then `parse_pomdp`
resolves names, fills T / Omega, and reduces R(s, a, s', o) to r(s, a).
Later statements overwrite earlier ones entry by entry.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import PomdpParseError
from .model import PomdpModel, validate

logger = logging.getLogger(__name__)

HEADER_KEYS = ('discount', 'values', 'states', 'actions', 'observations')
BODY_KEYS = ('T', 'O', 'R')
ALL_KEYS = HEADER_KEYS + BODY_KEYS + ('start',)

# rows within this distance of 1 are renormalized, anything worse is rejected
RENORM_TOL = 1e-6


@dataclass(frozen=True)
class Token:
    text: str
    line: int


class Space:
    """A declared set of states, actions or observations"""

    def __init__(self, kind: str, count: int, names: Optional[Tuple[str, ...]] = None):
        self.kind = kind
        self.count = count
        self.names = names
        self._lookup = {name: i for i, name in enumerate(names)} if names else {}

    def resolve(self, token: Token) -> List[int]:
        text = token.text
        if text == '*':
            return list(range(self.count))
        if text in self._lookup:
            return [self._lookup[text]]
        if text.isdigit():
            idx = int(text)
            if idx >= self.count:
                raise PomdpParseError(f"{self.kind} index {idx} out of range [0, {self.count})", token.line)
            return [idx]
        raise PomdpParseError(f"undeclared {self.kind} '{text}'", token.line)


@dataclass
class StartSpec:
    mode: str  # 'uniform' | 'dist' | 'state' | 'include' | 'exclude'
    tokens: Tuple[Token, ...]
    line: int


@dataclass
class Preamble:
    discount: Optional[float] = None
    discount_line: int = 0
    values: str = 'reward'
    spaces: Dict[str, Space] = field(default_factory=dict)
    start: Optional[StartSpec] = None
    declared: Dict[str, int] = field(default_factory=dict)

    def missing(self) -> List[str]:
        return [key for key in HEADER_KEYS if key not in self.declared]


@dataclass
class BodyStatement:
    kind: str
    selectors: Tuple[Token, ...]
    values: Tuple[Token, ...]
    line: int


@dataclass
class PomdpSourceFile:
    text: str
    preamble: Preamble
    body: List[BodyStatement]
    end_line: int = 0


def _tokenize(text: str) -> List[Token]:
    tokens = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        content = raw.split('#', 1)[0]
        for piece in content.replace(':', ' : ').split():
            tokens.append(Token(piece, lineno))
    return tokens


def _parse_number(token: Token) -> float:
    try:
        value = float(token.text)
    except ValueError:
        raise PomdpParseError(f"malformed number '{token.text}'", token.line) from None
    if not np.isfinite(value):
        raise PomdpParseError(f"malformed number '{token.text}'", token.line)
    return value


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


class _Reader:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def last_line(self) -> int:
        return self.tokens[-1].line if self.tokens else 0

    def peek(self, offset: int = 0) -> Optional[Token]:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def next(self) -> Token:
        if self.done():
            raise PomdpParseError("unexpected end of file", self.last_line())
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str, context: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise PomdpParseError(f"expected '{text}' after {context}, found '{tok.text}'", tok.line)
        return tok

    def at_statement(self) -> bool:
        tok, after = self.peek(), self.peek(1)
        if tok is None or tok.text == ':':
            return True
        # any `word :` opens a statement, known or not, so name lists stop there
        if after is not None and after.text == ':':
            return True
        return tok.text == 'start' and after is not None and after.text in ('include', 'exclude')

    def take_until_statement(self) -> List[Token]:
        taken = []
        while not self.at_statement():
            taken.append(self.next())
        return taken


def _read_space(reader: _Reader, key: Token, kind: str) -> Space:
    items = reader.take_until_statement()
    if not items:
        raise PomdpParseError(f"'{key.text}' declares nothing", key.line)
    if len(items) == 1 and items[0].text.isdigit():
        count = int(items[0].text)
        if count < 1:
            raise PomdpParseError(f"'{key.text}' count must be positive", key.line)
        return Space(kind, count)
    names = tuple(tok.text for tok in items)
    if len(set(names)) != len(names):
        raise PomdpParseError(f"duplicate names in '{key.text}'", key.line)
    return Space(kind, len(names), names)


def _read_start(reader: _Reader, key: Token, preamble: Preamble) -> StartSpec:
    tok = reader.next()
    if tok.text in ('include', 'exclude'):
        reader.expect(':', f"start {tok.text}")
        names = reader.take_until_statement()
        if not names:
            raise PomdpParseError(f"start {tok.text} lists no states", key.line)
        return StartSpec(tok.text, tuple(names), key.line)
    if tok.text != ':':
        raise PomdpParseError(f"expected ':' after start, found '{tok.text}'", tok.line)

    items = reader.take_until_statement()
    num_states = preamble.spaces['states'].count
    if not items:
        raise PomdpParseError("start declares nothing", key.line)
    if len(items) == 1 and items[0].text == 'uniform':
        return StartSpec('uniform', (), key.line)
    if len(items) == 1 and (num_states > 1 or not _is_number(items[0].text)):
        return StartSpec('state', tuple(items), key.line)
    if len(items) != num_states:
        raise PomdpParseError(f"start distribution needs {num_states} values, got {len(items)}", key.line)
    return StartSpec('dist', tuple(items), key.line)


def _value_count(kind: str, n_sel: int, S: int, O: int, line: int) -> Tuple[int, Tuple[str, ...]]:
    """(number of values, accepted keywords) for a body statement form"""
    if kind == 'T':
        forms = {3: (1, ()), 2: (S, ('uniform',)), 1: (S * S, ('uniform', 'identity'))}
    elif kind == 'O':
        forms = {3: (1, ()), 2: (O, ('uniform',)), 1: (S * O, ('uniform',))}
    else:
        forms = {4: (1, ()), 3: (O, ()), 2: (S * O, ())}
    if n_sel not in forms:
        raise PomdpParseError(f"{kind} statement with {n_sel} selector(s) is not supported", line)
    return forms[n_sel]


def _read_body(reader: _Reader, key: Token, preamble: Preamble) -> BodyStatement:
    reader.expect(':', key.text)
    selectors = [reader.next()]
    while reader.peek() is not None and reader.peek().text == ':':
        reader.next()
        selectors.append(reader.next())

    S = preamble.spaces['states'].count
    O = preamble.spaces['observations'].count
    n_values, keywords = _value_count(key.text, len(selectors), S, O, key.line)

    nxt = reader.peek()
    if nxt is not None and nxt.text in keywords:
        return BodyStatement(key.text, tuple(selectors), (reader.next(),), key.line)

    values = []
    for _ in range(n_values):
        tok = reader.peek()
        if tok is None or (not _is_number(tok.text) and reader.at_statement()):
            found = 'end of file' if tok is None else f"'{tok.text}'"
            raise PomdpParseError(
                f"{key.text} statement expects {n_values} value(s), got {len(values)} before {found}",
                key.line if tok is None else tok.line)
        values.append(reader.next())
        _parse_number(values[-1])
    return BodyStatement(key.text, tuple(selectors), tuple(values), key.line)


def _require_header(preamble: Preamble, line: int):
    missing = preamble.missing()
    if missing:
        raise PomdpParseError(f"missing header key '{missing[0]}:' before body", line)


def read_source(text: str) -> PomdpSourceFile:
    """First pass: resolve the preamble and collect raw body statements"""
    reader = _Reader(_tokenize(text))
    preamble = Preamble()
    body: List[BodyStatement] = []

    while not reader.done():
        key = reader.next()
        if key.text in BODY_KEYS:
            _require_header(preamble, key.line)
            body.append(_read_body(reader, key, preamble))
        elif key.text == 'start':
            _require_header(preamble, key.line)
            preamble.start = _read_start(reader, key, preamble)
        elif key.text in HEADER_KEYS:
            reader.expect(':', key.text)
            if key.text in preamble.declared:
                raise PomdpParseError(f"'{key.text}' declared twice", key.line)
            if body or preamble.start is not None:
                raise PomdpParseError(f"'{key.text}' must come before body statements", key.line)
            preamble.declared[key.text] = key.line
            if key.text == 'discount':
                preamble.discount = _parse_number(reader.next())
                preamble.discount_line = key.line
            elif key.text == 'values':
                tok = reader.next()
                if tok.text not in ('reward', 'cost'):
                    raise PomdpParseError(f"values must be 'reward' or 'cost', got '{tok.text}'", tok.line)
                preamble.values = tok.text
            else:
                preamble.spaces[key.text] = _read_space(reader, key, key.text.rstrip('s'))
        else:
            raise PomdpParseError(f"unknown key '{key.text}'", key.line)

    _require_header(preamble, reader.last_line())
    return PomdpSourceFile(text, preamble, body, reader.last_line())


def _numbers(stmt: BodyStatement) -> np.ndarray:
    return np.array([_parse_number(tok) for tok in stmt.values])


def _check_rows(rows: np.ndarray, lines: np.ndarray, label: str, end_line: int) -> np.ndarray:
    """Reject bad probability rows, renormalize nearly-good ones.

    Rows no statement touched are reported at the last line of the file.
    """
    A, X, _ = rows.shape
    for a in range(A):
        for x in range(X):
            row = rows[a, x]
            line = int(lines[a, x]) or None
            if lines[a, x] == 0:
                raise PomdpParseError(f"{label} row (action {a}, {x}) is never specified", end_line)
            if (row < 0).any():
                raise PomdpParseError(f"{label} row (action {a}, {x}) has negative entries", line)
            total = row.sum()
            if abs(total - 1.0) > RENORM_TOL:
                raise PomdpParseError(f"{label} row (action {a}, {x}) sums to {total!r}", line)
    return rows / rows.sum(axis=2, keepdims=True)


def _start_belief(spec: StartSpec, states: Space) -> np.ndarray:
    S = states.count
    if spec.mode == 'uniform':
        return np.full(S, 1.0 / S)
    if spec.mode == 'dist':
        b = np.array([_parse_number(tok) for tok in spec.tokens])
        if (b < 0).any() or abs(b.sum() - 1.0) > RENORM_TOL:
            raise PomdpParseError(f"start distribution sums to {b.sum()!r}", spec.line)
        return b / b.sum()

    picked = sorted({i for tok in spec.tokens for i in states.resolve(tok)})
    b = np.zeros(S)
    if spec.mode == 'exclude':
        keep = [i for i in range(S) if i not in picked]
        if not keep:
            raise PomdpParseError("start exclude removes every state", spec.line)
        b[keep] = 1.0 / len(keep)
    else:
        b[picked] = 1.0 / len(picked)
    return b


def parse_pomdp(text: str) -> PomdpModel:
    """Parse a `.pomdp` document into a validated PomdpModel"""
    source = read_source(text)
    pre = source.preamble
    states = pre.spaces['states']
    actions = pre.spaces['actions']
    observations = pre.spaces['observations']
    S, A, O = states.count, actions.count, observations.count

    if not (0.0 < pre.discount < 1.0):
        raise PomdpParseError(f"discount out of (0,1): {pre.discount!r}", pre.discount_line)

    T = np.zeros((A, S, S))
    Om = np.zeros((A, S, O))
    t_lines = np.zeros((A, S), dtype=int)
    o_lines = np.zeros((A, S), dtype=int)
    reward_entries: Dict[Tuple[int, int], list] = defaultdict(list)

    for stmt in source.body:
        sel = stmt.selectors
        acts = actions.resolve(sel[0])
        keyword = stmt.values[0].text if len(stmt.values) == 1 and not _is_number(stmt.values[0].text) else None

        if stmt.kind == 'T':
            if len(sel) == 3:
                ss, sp = states.resolve(sel[1]), states.resolve(sel[2])
                T[np.ix_(acts, ss, sp)] = _numbers(stmt)[0]
                t_lines[np.ix_(acts, ss)] = stmt.line
            elif len(sel) == 2:
                ss = states.resolve(sel[1])
                T[np.ix_(acts, ss)] = np.full(S, 1.0 / S) if keyword == 'uniform' else _numbers(stmt)
                t_lines[np.ix_(acts, ss)] = stmt.line
            else:
                if keyword == 'uniform':
                    block = np.full((S, S), 1.0 / S)
                elif keyword == 'identity':
                    block = np.eye(S)
                else:
                    block = _numbers(stmt).reshape(S, S)
                T[acts] = block
                t_lines[acts] = stmt.line

        elif stmt.kind == 'O':
            if len(sel) == 3:
                sp, os_ = states.resolve(sel[1]), observations.resolve(sel[2])
                Om[np.ix_(acts, sp, os_)] = _numbers(stmt)[0]
                o_lines[np.ix_(acts, sp)] = stmt.line
            elif len(sel) == 2:
                sp = states.resolve(sel[1])
                Om[np.ix_(acts, sp)] = np.full(O, 1.0 / O) if keyword == 'uniform' else _numbers(stmt)
                o_lines[np.ix_(acts, sp)] = stmt.line
            else:
                Om[acts] = np.full((S, O), 1.0 / O) if keyword == 'uniform' else _numbers(stmt).reshape(S, O)
                o_lines[acts] = stmt.line

        else:
            ss = states.resolve(sel[1])
            if len(sel) == 4:
                entry = ('cell', states.resolve(sel[2]), observations.resolve(sel[3]), _numbers(stmt)[0])
            elif len(sel) == 3:
                entry = ('row', states.resolve(sel[2]), None, _numbers(stmt))
            else:
                entry = ('block', None, None, _numbers(stmt).reshape(S, O))
            for a in acts:
                for s in ss:
                    reward_entries[(a, s)].append(entry)

    T = _check_rows(T, t_lines, 'transition', source.end_line)
    Om = _check_rows(Om, o_lines, 'observation', source.end_line)

    # r(s,a) = sum_s' T(s'|s,a) sum_o Omega(o|s',a) R(s,a,s',o)
    reward = np.zeros((S, A))
    for (a, s), entries in reward_entries.items():
        R_as = np.zeros((S, O))
        for form, sp, os_, value in entries:
            if form == 'cell':
                R_as[np.ix_(sp, os_)] = value
            elif form == 'row':
                R_as[sp] = value
            else:
                R_as[:] = value
        reward[s, a] = T[a, s] @ (Om[a] * R_as).sum(axis=1)
    if pre.values == 'cost':
        reward = -reward

    start = _start_belief(pre.start, states) if pre.start is not None else None

    model = PomdpModel(
        num_states=S, num_actions=A, num_observations=O,
        transition=T, observation=Om, reward=reward, discount=pre.discount,
        start_belief=start,
        state_names=states.names, action_names=actions.names,
        observation_names=observations.names,
    )
    report = validate(model)
    if not report.ok:
        raise PomdpParseError(f"model failed validation: {report.summary()}", source.end_line)

    logger.debug(f"Parsed POMDP |S|={S} |A|={A} |O|={O} gamma={pre.discount}")
    return model


def load_pomdp(path) -> PomdpModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"POMDP file not found: {path}")
    logger.info(f"Loading POMDP from {path}")
    return parse_pomdp(path.read_text(encoding='utf-8'))


def _label(names: Optional[Tuple[str, ...]], i: int) -> str:
    return names[i] if names else str(i)


def _space_line(key: str, count: int, names: Optional[Tuple[str, ...]]) -> str:
    return f"{key}: {' '.join(names)}" if names else f"{key}: {count}"


def _fmt(values) -> str:
    return ' '.join(repr(float(v)) for v in values)


def serialize_pomdp(model: PomdpModel) -> str:
    """Explicit-matrix `.pomdp` text that parses back to the same arrays"""
    lines = [
        "# written by aafib",
        f"discount: {model.discount!r}",
        "values: reward",
        _space_line('states', model.num_states, model.state_names),
        _space_line('actions', model.num_actions, model.action_names),
        _space_line('observations', model.num_observations, model.observation_names),
    ]
    if model.start_belief is not None:
        lines.append(f"start: {_fmt(model.start_belief)}")
    lines.append("")

    for a in range(model.num_actions):
        lines.append(f"T: {_label(model.action_names, a)}")
        lines.extend(_fmt(row) for row in model.transition[a])
        lines.append("")

    for a in range(model.num_actions):
        lines.append(f"O: {_label(model.action_names, a)}")
        lines.extend(_fmt(row) for row in model.observation[a])
        lines.append("")

    for a in range(model.num_actions):
        for s in range(model.num_states):
            lines.append(f"R: {_label(model.action_names, a)} : {_label(model.state_names, s)} "
                         f": * : * {float(model.reward[s, a])!r}")

    return "\n".join(lines) + "\n"


def save_pomdp(path, model: PomdpModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_pomdp(model), encoding='utf-8')
    logger.info(f"Saved POMDP to {path}")
    return path
