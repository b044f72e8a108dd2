"""Agent rule language: lexing, parsing, validation, classification, printing.

A rule file is a sequence of ``sp { name (conditions) --> (actions) }``
blocks. ``#`` starts a comment. Conditions take the form
``(<id> ^attr value [+])`` with an optional leading ``-`` for negation and
``{ <var> <op> operand }`` conjunctions for comparison tests. Actions are
structure makes ``(<id> ^attr value)``, structure removes
``(<id> ^attr value -)``, operator preferences
``(<s> ^operator <o> glyph [referent])``, or ``(halt)``.

Parsing never raises on malformed input: each bad block yields a
Diagnostic and the remaining well-formed rules are still returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

# Preference glyphs on the ^operator slot. "-" on any other attribute is a
# structure removal, not a reject preference.
ACCEPTABLE = "acceptable"
REJECT = "reject"
BETTER = "better"
WORSE = "worse"
BEST = "best"
WORST = "worst"
UNARY_INDIFFERENT = "unary-indifferent"
BINARY_INDIFFERENT = "binary-indifferent"
NUMERIC = "numeric"

ELABORATION = "elaboration"
PROPOSAL = "proposal"
EVALUATION = "evaluation"
APPLICATION = "application"

COMPARISON_OPS = ("<=", ">=", "<>", "<", ">")


@dataclass(frozen=True)
class Var:
    """A rule variable; written ``<name>`` in source form."""

    name: str

    def __str__(self) -> str:
        return f"<{self.name}>"


@dataclass(frozen=True)
class Comparison:
    op: str
    operand: object  # numeric constant, string constant (for <>), or Var


@dataclass(frozen=True)
class Test:
    """Test on one field of a condition.

    Any combination of an equality constant, a variable (binding on first
    occurrence, equality after), and comparisons. All present parts must
    hold. A Test with nothing set matches anything.
    """

    const: object = None
    var: Var | None = None
    comparisons: tuple[Comparison, ...] = ()

    def is_wild(self) -> bool:
        return self.const is None and self.var is None and not self.comparisons


@dataclass(frozen=True)
class Condition:
    negative: bool
    id_test: Test
    attr_test: Test | None  # None only for a bare "(state <s>)" test
    value_test: Test
    acceptable: bool = False  # tests the WM mirror of an acceptable preference
    state_test: bool = False


@dataclass(frozen=True)
class MakeAction:
    id: Var
    attr: object  # str constant or Var
    value: object  # constant or Var


@dataclass(frozen=True)
class RemoveAction:
    id: Var
    attr: object
    value: object


@dataclass(frozen=True)
class PreferenceAction:
    state: Var
    operator: Var
    kind: str
    referent: Var | None = None
    value: object = None  # numeric constant or Var, for NUMERIC kind


@dataclass(frozen=True)
class HaltAction:
    pass


Action = object  # MakeAction | RemoveAction | PreferenceAction | HaltAction


@dataclass
class Rule:
    name: str
    conditions: tuple[Condition, ...]
    actions: tuple[Action, ...]
    func_class: str = ELABORATION
    rl: bool = False
    provenance: str = "loaded"  # loaded | chunk | justification


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class RuleClassError(Exception):
    """A rule mixes functions and cannot be classified."""


# ---------------------------------------------------------------------------
# Lexer


@dataclass(frozen=True)
class _Tok:
    kind: str  # lparen rparen lbrace rbrace arrow caret var sym num op glyph
    text: str
    value: object
    line: int
    col: int


_GLYPHS = "+-=<>"
_SYM_EXTRA = "-_*?.!"


def _is_sym_char(c: str) -> bool:
    return c.isalnum() or c in _SYM_EXTRA


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def emit(kind, s, value=None, ln=None, cl=None):
        toks.append(_Tok(kind, s, value, ln if ln is not None else line,
                         cl if cl is not None else col))

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c == "(":
            emit("lparen", c)
            i += 1
            col += 1
            continue
        if c == ")":
            emit("rparen", c)
            i += 1
            col += 1
            continue
        if c == "{":
            emit("lbrace", c)
            i += 1
            col += 1
            continue
        if c == "}":
            emit("rbrace", c)
            i += 1
            col += 1
            continue
        if c == "^":
            emit("caret", c)
            i += 1
            col += 1
            continue
        if text.startswith("-->", i):
            emit("arrow", "-->")
            i += 3
            col += 3
            continue
        if c == "<":
            # <var>, <=, <>, or bare <
            j = i + 1
            while j < n and _is_sym_char(text[j]):
                j += 1
            if j > i + 1 and j < n and text[j] == ">":
                name = text[i + 1:j]
                emit("var", text[i:j + 1], Var(name))
                col += j + 1 - i
                i = j + 1
                continue
            if i + 1 < n and text[i + 1] in "=>":
                op = text[i:i + 2]
                emit("op", op)
                i += 2
                col += 2
                continue
            emit("op", "<")
            i += 1
            col += 1
            continue
        if c == ">":
            if i + 1 < n and text[i + 1] == "=":
                emit("op", ">=")
                i += 2
                col += 2
                continue
            emit("op", ">")
            i += 1
            col += 1
            continue
        if c in "+=":
            emit("glyph", c)
            i += 1
            col += 1
            continue
        if c == "-" and not (i + 1 < n and (text[i + 1].isdigit() or text[i + 1] == ".")):
            emit("glyph", "-")
            i += 1
            col += 1
            continue
        # number or bare symbol
        j = i
        if c in "+-":
            j += 1
        while j < n and _is_sym_char(text[j]):
            j += 1
        word = text[i:j]
        if not word:
            emit("sym", c, c)  # lone odd character; parser will complain
            i += 1
            col += 1
            continue
        value: object = word
        kind = "sym"
        try:
            value = int(word)
            kind = "num"
        except ValueError:
            try:
                value = float(word)
                kind = "num"
            except ValueError:
                pass
        emit(kind, word, value, start_line, start_col)
        col += j - i
        i = j
    return toks


# ---------------------------------------------------------------------------
# Parser


class _BlockError(Exception):
    def __init__(self, tok: _Tok | None, message: str):
        self.tok = tok
        self.message = message
        super().__init__(message)


class _Cursor:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> _Tok | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise _BlockError(None, "unexpected end of input (unbalanced braces?)")
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Tok:
        tok = self.next()
        if tok.kind != kind:
            raise _BlockError(tok, f"expected {kind}, found {tok.text!r}")
        return tok


def _parse_test_item(cur: _Cursor) -> tuple[object | None, Var | None, list[Comparison]]:
    """One element inside a value slot: const, var, or { ... } conjunction."""
    tok = cur.peek()
    if tok is None:
        raise _BlockError(None, "unexpected end of input in test")
    if tok.kind == "lbrace":
        cur.next()
        const, var, comps = None, None, []
        while True:
            tok = cur.peek()
            if tok is None:
                raise _BlockError(None, "unbalanced { in test")
            if tok.kind == "rbrace":
                cur.next()
                break
            if tok.kind == "op":
                op = cur.next().text
                operand = cur.next()
                if operand.kind == "var":
                    comps.append(Comparison(op, operand.value))
                elif operand.kind == "num":
                    comps.append(Comparison(op, operand.value))
                elif operand.kind == "sym" and op == "<>":
                    comps.append(Comparison(op, operand.value))
                else:
                    raise _BlockError(operand,
                                      f"comparison operand must be numeric or a variable, found {operand.text!r}")
            elif tok.kind == "var":
                cur.next()
                if var is not None:
                    comps.append(Comparison("=", tok.value))
                else:
                    var = tok.value
            elif tok.kind in ("num", "sym"):
                cur.next()
                const = tok.value
            else:
                raise _BlockError(tok, f"unexpected {tok.text!r} in conjunctive test")
        return const, var, comps
    if tok.kind == "var":
        cur.next()
        return None, tok.value, []
    if tok.kind in ("num", "sym"):
        cur.next()
        return tok.value, None, []
    raise _BlockError(tok, f"expected a value test, found {tok.text!r}")


def _parse_condition_group(cur: _Cursor, negative: bool) -> list[Condition]:
    """Parse one parenthesized condition; multi-attribute forms desugar to
    one Condition per ^attr value pair."""
    cur.expect("lparen")
    tok = cur.next()
    state_test = False
    if tok.kind == "sym" and tok.value == "state":
        state_test = True
        tok = cur.next()
    if tok.kind == "var":
        id_test = Test(var=tok.value)
    elif tok.kind == "sym":
        id_test = Test(const=tok.value)
    else:
        raise _BlockError(tok, f"expected an identifier test, found {tok.text!r}")

    out: list[Condition] = []
    while True:
        tok = cur.peek()
        if tok is None:
            raise _BlockError(None, "unbalanced parenthesis in condition")
        if tok.kind == "rparen":
            cur.next()
            break
        cur.expect("caret")
        atok = cur.next()
        if atok.kind == "var":
            attr_test = Test(var=atok.value)
        elif atok.kind == "sym":
            attr_test = Test(const=atok.value)
        else:
            raise _BlockError(atok, f"expected attribute after ^, found {atok.text!r}")
        const, var, comps = _parse_test_item(cur)
        acceptable = False
        nxt = cur.peek()
        if nxt is not None and nxt.kind == "glyph" and nxt.text == "+":
            cur.next()
            acceptable = True
        out.append(Condition(
            negative=negative,
            id_test=id_test,
            attr_test=attr_test,
            value_test=Test(const=const, var=var, comparisons=tuple(comps)),
            acceptable=acceptable,
            state_test=state_test and not out,
        ))
        # only the first desugared condition carries the binding occurrence
        if id_test.var is not None:
            id_test = Test(var=id_test.var)
    if not out:
        if not state_test:
            raise _BlockError(tok, "a non-state condition needs at least one ^attr value pair")
        out.append(Condition(
            negative=negative, id_test=id_test, attr_test=None,
            value_test=Test(), state_test=True,
        ))
    return out


_PREF_BY_GLYPH_UNARY = {"+": ACCEPTABLE, "-": REJECT, ">": BEST, "<": WORST, "=": UNARY_INDIFFERENT}
_PREF_BY_GLYPH_BINARY = {">": BETTER, "<": WORSE, "=": BINARY_INDIFFERENT}


def _parse_action(cur: _Cursor) -> list[Action]:
    cur.expect("lparen")
    tok = cur.next()
    if tok.kind == "sym" and tok.value == "halt":
        cur.expect("rparen")
        return [HaltAction()]
    if tok.kind != "var":
        raise _BlockError(tok, f"action identifier must be a variable, found {tok.text!r}")
    id_var: Var = tok.value

    out: list[Action] = []
    while True:
        tok = cur.peek()
        if tok is None:
            raise _BlockError(None, "unbalanced parenthesis in action")
        if tok.kind == "rparen":
            cur.next()
            break
        cur.expect("caret")
        atok = cur.next()
        if atok.kind == "var":
            attr: object = atok.value
        elif atok.kind == "sym":
            attr = atok.value
        else:
            raise _BlockError(atok, f"expected attribute after ^, found {atok.text!r}")
        vtok = cur.next()
        if vtok.kind in ("sym", "num", "var"):
            value = vtok.value
        else:
            raise _BlockError(vtok, f"expected an action value, found {vtok.text!r}")

        glyph = None
        nxt = cur.peek()
        if nxt is not None and nxt.kind in ("glyph", "op") and nxt.text in _GLYPHS:
            glyph = cur.next().text

        if glyph is None:
            out.append(MakeAction(id_var, attr, value))
            continue
        if attr != "operator":
            if glyph != "-":
                raise _BlockError(nxt, f"preference glyph {glyph!r} is only valid on the ^operator slot")
            out.append(RemoveAction(id_var, attr, value))
            continue
        # preference action on the operator slot
        if not isinstance(value, Var):
            raise _BlockError(vtok, "a preference must name its operator with a variable")
        referent = None
        num_value = None
        nxt = cur.peek()
        if glyph in (">", "<", "=") and nxt is not None and nxt.kind in ("var", "num"):
            cur.next()
            if nxt.kind == "num":
                if glyph != "=":
                    raise _BlockError(nxt, f"{glyph!r} preference referent must be an operator variable")
                num_value = nxt.value
            else:
                referent = nxt.value
        if glyph == "=" and num_value is not None:
            kind = NUMERIC
        elif referent is not None:
            kind = _PREF_BY_GLYPH_BINARY[glyph]
        else:
            kind = _PREF_BY_GLYPH_UNARY[glyph]
        # a numeric preference may also take its value from a bound variable
        if kind == UNARY_INDIFFERENT and isinstance(num_value, Var):
            kind = NUMERIC
        out.append(PreferenceAction(id_var, value, kind, referent, num_value))
    if not out:
        raise _BlockError(tok, "an action needs at least one ^attr value pair")
    return out


def _validate_bindings(conditions: list[Condition], actions: list[Action]) -> str | None:
    bound: set[Var] = set()
    for i, cond in enumerate(conditions):
        cond_vars = []
        for test in (cond.id_test, cond.attr_test, cond.value_test):
            if test is None:
                continue
            if test.var is not None:
                cond_vars.append(test.var)
            for comp in test.comparisons:
                if isinstance(comp.operand, Var) and comp.operand not in bound \
                        and comp.operand not in cond_vars:
                    return f"comparison operand {comp.operand} is not bound by a prior condition"
        if cond.negative:
            for v in cond_vars:
                if v not in bound:
                    return f"unbound variable {v} in negative condition"
            continue
        # positive conditions must link to earlier structure
        if i > 0 and not cond.state_test and cond.id_test.var is not None \
                and cond.id_test.var not in bound:
            return f"condition identifier {cond.id_test.var} is not linked to prior structure"
        bound.update(cond_vars)

    # action variables: ok if bound in conditions, or introduced as the value
    # of another ok action (fresh identifiers); resolved by fixpoint
    ok: set[Var] = set(bound)
    pending: list[Action] = [a for a in actions if not isinstance(a, HaltAction)]
    progress = True
    while progress and pending:
        progress = False
        for act in list(pending):
            if isinstance(act, RemoveAction):
                if all(not isinstance(v, Var) or v in bound
                       for v in (act.id, act.attr, act.value)):
                    pending.remove(act)
                    progress = True
            elif isinstance(act, MakeAction):
                if act.id in ok and (not isinstance(act.attr, Var) or act.attr in bound):
                    if isinstance(act.value, Var) and act.value not in ok:
                        ok.add(act.value)
                    pending.remove(act)
                    progress = True
            elif isinstance(act, PreferenceAction):
                deps = [act.state]
                if act.referent is not None:
                    deps.append(act.referent)
                if isinstance(act.value, Var):
                    deps.append(act.value)
                if all(d in ok for d in deps):
                    ok.add(act.operator)
                    pending.remove(act)
                    progress = True
    for act in pending:
        if isinstance(act, RemoveAction):
            for v in (act.id, act.attr, act.value):
                if isinstance(v, Var) and v not in bound:
                    return f"unbound variable {v} in removal action"
        elif isinstance(act, MakeAction):
            bad = act.id if act.id not in ok else act.attr
            return f"unbound variable {bad} in action"
        elif isinstance(act, PreferenceAction):
            for v in (act.state, act.referent, act.value):
                if isinstance(v, Var) and v not in ok:
                    return f"unbound variable {v} in action"
    return None


def classify(conditions: tuple[Condition, ...], actions: tuple[Action, ...]) -> tuple[str, bool]:
    """Assign the rule's function class and RL flag.

    Raises RuleClassError when a rule mixes functions (the error names the
    functions detected).
    """
    has_acc = any(isinstance(a, PreferenceAction) and a.kind == ACCEPTABLE for a in actions)
    other_prefs = [a for a in actions
                   if isinstance(a, PreferenceAction) and a.kind != ACCEPTABLE]
    makes = [a for a in actions if isinstance(a, MakeAction)]
    removes = [a for a in actions if isinstance(a, RemoveAction)]
    tests_selected = any(
        not c.negative and not c.acceptable and c.attr_test is not None
        and c.attr_test.const == "operator"
        for c in conditions)

    if has_acc and other_prefs:
        raise RuleClassError(
            "rule mixes proposal (acceptable preference) and evaluation "
            "(other preferences)")
    if other_prefs and (makes or removes):
        raise RuleClassError(
            "rule mixes evaluation (preferences) and "
            f"{'application' if tests_selected else 'elaboration'} (structure changes)")
    if has_acc and removes:
        raise RuleClassError(
            "rule mixes proposal (acceptable preference) and application (structure removal)")
    if has_acc:
        return PROPOSAL, False
    if other_prefs:
        rl = (len(actions) == 1
              and actions[0].kind == NUMERIC
              and isinstance(actions[0].value, (int, float)))
        return EVALUATION, rl
    if removes and not tests_selected:
        raise RuleClassError(
            "rule removes structure (application) without testing a selected "
            "operator (elaboration conditions)")
    if tests_selected:
        return APPLICATION, False
    return ELABORATION, False


def parse_agent_file(text: str) -> tuple[list[Rule], list[Diagnostic]]:
    """Parse every ``sp { ... }`` block; malformed blocks become diagnostics."""
    toks = _tokenize(text)
    cur = _Cursor(toks)
    rules: list[Rule] = []
    diags: list[Diagnostic] = []

    def diag_at(tok: _Tok | None, message: str):
        if tok is None:
            last = toks[-1] if toks else None
            diags.append(Diagnostic(last.line if last else 1, last.col if last else 1, message))
        else:
            diags.append(Diagnostic(tok.line, tok.col, message))

    def skip_block():
        # resync: consume to the } closing this block, or the next sp at depth 0
        depth = 0
        while True:
            tok = cur.peek()
            if tok is None:
                return
            if tok.kind == "lbrace":
                depth += 1
            elif tok.kind == "rbrace":
                cur.next()
                if depth <= 1:
                    return
                depth -= 1
                continue
            elif tok.kind == "sym" and tok.value == "sp" and depth == 0:
                return
            cur.next()

    while cur.peek() is not None:
        tok = cur.next()
        if not (tok.kind == "sym" and tok.value == "sp"):
            diag_at(tok, f"expected 'sp', found {tok.text!r}")
            skip_block()
            continue
        try:
            cur.expect("lbrace")
            name_tok = cur.expect("sym")
            name = str(name_tok.value)
            conditions: list[Condition] = []
            while True:
                tok = cur.peek()
                if tok is None:
                    raise _BlockError(None, "unexpected end of input (unbalanced braces?)")
                if tok.kind == "arrow":
                    cur.next()
                    break
                if tok.kind == "glyph" and tok.text == "-":
                    cur.next()
                    conditions.extend(_parse_condition_group(cur, negative=True))
                elif tok.kind == "lparen":
                    conditions.extend(_parse_condition_group(cur, negative=False))
                else:
                    raise _BlockError(tok, f"expected a condition or -->, found {tok.text!r}")
            actions: list[Action] = []
            while True:
                tok = cur.peek()
                if tok is None:
                    raise _BlockError(None, "unexpected end of input (unbalanced braces?)")
                if tok.kind == "rbrace":
                    cur.next()
                    break
                actions.extend(_parse_action(cur))

            if not conditions:
                raise _BlockError(name_tok, "rule has no conditions")
            first = conditions[0]
            if first.negative or not first.state_test:
                raise _BlockError(name_tok, "the first condition must be a positive state test")
            err = _validate_bindings(conditions, actions)
            if err:
                raise _BlockError(name_tok, err)
            func_class, rl = classify(tuple(conditions), tuple(actions))
            rules.append(Rule(name, tuple(conditions), tuple(actions), func_class, rl))
        except _BlockError as e:
            diag_at(e.tok if e.tok is not None else None, e.message)
            skip_block()
        except RuleClassError as e:
            diag_at(name_tok, str(e))
    return rules, diags


# ---------------------------------------------------------------------------
# Printing


def _fmt_value(v: object) -> str:
    if isinstance(v, Var):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt_test(t: Test) -> str:
    parts: list[str] = []
    if t.const is not None:
        parts.append(_fmt_value(t.const))
    if t.var is not None:
        parts.append(str(t.var))
    for comp in t.comparisons:
        if comp.op == "=":
            parts.append(_fmt_value(comp.operand))
        else:
            parts.append(f"{comp.op} {_fmt_value(comp.operand)}")
    if not parts:
        return "{}"
    if len(parts) == 1 and not t.comparisons:
        return parts[0]
    return "{ " + " ".join(parts) + " }"


_GLYPH_BY_PREF = {
    ACCEPTABLE: "+", REJECT: "-", BEST: ">", WORST: "<", UNARY_INDIFFERENT: "=",
    BETTER: ">", WORSE: "<", BINARY_INDIFFERENT: "=", NUMERIC: "=",
}


def format_condition(cond: Condition) -> str:
    head = "state " if cond.state_test else ""
    idp = _fmt_test(cond.id_test)
    if cond.attr_test is None:
        body = f"({head}{idp})"
    else:
        attr = _fmt_test(cond.attr_test)
        value = _fmt_test(cond.value_test)
        acc = " +" if cond.acceptable else ""
        body = f"({head}{idp} ^{attr} {value}{acc})"
    return ("-" if cond.negative else "") + body


def format_action(act: Action) -> str:
    if isinstance(act, HaltAction):
        return "(halt)"
    if isinstance(act, MakeAction):
        return f"({act.id} ^{_fmt_value(act.attr)} {_fmt_value(act.value)})"
    if isinstance(act, RemoveAction):
        return f"({act.id} ^{_fmt_value(act.attr)} {_fmt_value(act.value)} -)"
    assert isinstance(act, PreferenceAction)
    glyph = _GLYPH_BY_PREF[act.kind]
    tail = ""
    if act.referent is not None:
        tail = f" {act.referent}"
    elif act.value is not None:
        tail = f" {_fmt_value(act.value)}"
    return f"({act.state} ^operator {act.operator} {glyph}{tail})"


def format_rule(rule: Rule) -> str:
    lines = [f"sp {{{rule.name}"]
    for cond in rule.conditions:
        lines.append(f"    {format_condition(cond)}")
    lines.append("    -->")
    for act in rule.actions:
        lines.append(f"    {format_action(act)}")
    lines.append("}")
    return "\n".join(lines)


def canonical_key(rule: Rule) -> str:
    """Structural identity of a rule up to variable renaming.

    Variables are renamed to v1, v2, ... in order of first occurrence; the
    result is the pretty-printed body (name excluded)."""
    mapping: dict[Var, Var] = {}

    def rn(v: object) -> object:
        if isinstance(v, Var):
            if v not in mapping:
                mapping[v] = Var(f"v{len(mapping) + 1}")
            return mapping[v]
        return v

    def rn_test(t: Test | None) -> Test | None:
        if t is None:
            return None
        comps = tuple(Comparison(c.op, rn(c.operand)) for c in t.comparisons)
        return Test(t.const, rn(t.var), comps)

    conds = [replace(c, id_test=rn_test(c.id_test), attr_test=rn_test(c.attr_test),
                     value_test=rn_test(c.value_test))
             for c in rule.conditions]
    acts: list[Action] = []
    for a in rule.actions:
        if isinstance(a, MakeAction):
            acts.append(MakeAction(rn(a.id), rn(a.attr), rn(a.value)))
        elif isinstance(a, RemoveAction):
            acts.append(RemoveAction(rn(a.id), rn(a.attr), rn(a.value)))
        elif isinstance(a, PreferenceAction):
            acts.append(PreferenceAction(rn(a.state), rn(a.operator), a.kind,
                                         rn(a.referent), rn(a.value)))
        else:
            acts.append(a)
    body = [format_condition(c) for c in conds] + ["-->"] + [format_action(a) for a in acts]
    return "\n".join(body)
