"""Graph working memory: identifiers, WMEs, the state stack, buffers.

Working memory is a set of (identifier, attribute, value) triples. Values
may be identifiers (graph edges) or constants. Acceptable-preference
mirrors carry an extra flag so they never collide with plain WMEs of the
same triple. Every identifier has a level: the depth of the state it
belongs to. Levels drive result detection and substate garbage sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

I_SUPPORT = "i"
O_SUPPORT = "o"
ARCH_SUPPORT = "arch"

# architecture-owned attributes created on substates / states
ARCH_ATTRS = frozenset({
    "superstate", "impasse", "attribute", "choices", "item", "operator",
    "io", "input-link", "output-link", "reward-link",
    "smem-command", "smem-result", "epmem-command", "epmem-result",
})

STATE_NO_CHANGE = "state-no-change"
TIE = "tie"
CONFLICT = "conflict"
OPERATOR_NO_CHANGE = "operator-no-change"

# printed value of the ^impasse architecture WME
IMPASSE_WME_VALUE = {
    STATE_NO_CHANGE: "no-change",
    OPERATOR_NO_CHANGE: "no-change",
    TIE: "tie",
    CONFLICT: "conflict",
}


@dataclass(frozen=True)
class Identifier:
    letter: str
    index: int

    def __str__(self) -> str:
        return f"{self.letter}{self.index}"


Symbol = object  # Identifier | str | int | float


def sym_str(v: Symbol) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class WME:
    timetag: int
    id: Identifier
    attr: str
    value: Symbol
    acceptable: bool = False
    support: str = I_SUPPORT
    # instantiation ids currently justifying an i-supported WME
    justifications: set[int] = field(default_factory=set)
    # instantiation ids that ever created it, in creation order (back-tracing)
    creators: list[int] = field(default_factory=list)

    def key(self) -> tuple:
        return (self.id, self.attr, self.value, self.acceptable)

    def __str__(self) -> str:
        acc = " +" if self.acceptable else ""
        return f"({self.id} ^{self.attr} {sym_str(self.value)}{acc} [{self.timetag}])"


@dataclass
class ImpasseRecord:
    type: str  # STATE_NO_CHANGE | TIE | CONFLICT | OPERATOR_NO_CHANGE
    attribute: str  # "state" | "operator"
    items: tuple[Identifier, ...] = ()
    operator: Identifier | None = None  # stuck operator, for operator-no-change

    def same_kind(self, other: "ImpasseRecord") -> bool:
        return self.type == other.type and self.attribute == other.attribute \
            and self.operator == other.operator


@dataclass
class State:
    id: Identifier
    depth: int
    superstate: Identifier | None = None
    substate: Identifier | None = None
    impasse: ImpasseRecord | None = None  # why this state exists (None: topstate)
    selected_operator: Identifier | None = None
    selected_at_cycle: int = -1
    applied_since_selection: bool = False
    stochastic_numeric_decision: bool = False  # poisons chunking for this state
    # buffer roots
    smem_command: Identifier | None = None
    smem_result: Identifier | None = None
    epmem_command: Identifier | None = None
    epmem_result: Identifier | None = None
    reward_link: Identifier | None = None
    # topstate only
    io: Identifier | None = None
    input_link: Identifier | None = None
    output_link: Identifier | None = None


class DanglingIdError(Exception):
    pass


class DeadStateError(Exception):
    pass


class WorkingMemory:
    """Single-writer store of WMEs plus the identifier registry."""

    def __init__(self):
        self.wmes: dict[tuple, WME] = {}
        self.by_id: dict[Identifier, dict[tuple, WME]] = {}
        self.incoming: dict[Identifier, set[tuple]] = {}
        self.levels: dict[Identifier, int] = {}
        self.live_ids: set[Identifier] = set()
        self.dead_ids: set[Identifier] = set()
        self._letter_counters: dict[str, int] = {}
        self._next_timetag = 1
        self.states: list[State] = []  # stack, topstate first
        self.state_by_id: dict[Identifier, State] = {}
        # deltas not yet drained by the matcher: ("add"|"remove", wme)
        self.pending_deltas: list[tuple[str, WME]] = []

    # -- identifiers --------------------------------------------------------

    def new_id(self, letter: str, level: int) -> Identifier:
        letter = (letter or "x")[0].upper()
        n = self._letter_counters.get(letter, 0) + 1
        self._letter_counters[letter] = n
        ident = Identifier(letter, n)
        self.levels[ident] = level
        self.live_ids.add(ident)
        return ident

    def register(self, ident: Identifier, level: int) -> None:
        """Register an externally minted identifier (replay harnesses)."""
        self.levels.setdefault(ident, level)
        self.live_ids.add(ident)
        n = self._letter_counters.get(ident.letter, 0)
        if ident.index > n:
            self._letter_counters[ident.letter] = ident.index

    def level(self, ident: Identifier) -> int:
        return self.levels[ident]

    # -- WMEs ---------------------------------------------------------------

    def add(self, id: Identifier, attr: str, value: Symbol, *,
            acceptable: bool = False, support: str = I_SUPPORT,
            inst: int | None = None) -> WME:
        """Add a WME, or merge the justification into an existing duplicate.

        The id must be live. Fresh identifier values are registered at the
        id's level; known deeper identifiers are promoted (linking local
        structure to a shallower state makes it part of that state).
        """
        if id in self.dead_ids:
            raise DeadStateError(f"identifier {id} belongs to a removed substate")
        if id not in self.live_ids:
            raise DanglingIdError(f"identifier {id} is not reachable from any state")
        if isinstance(value, Identifier):
            if value in self.dead_ids:
                raise DeadStateError(f"identifier {value} belongs to a removed substate")
            if value not in self.live_ids:
                self.register(value, self.levels[id])
            elif self.levels[value] > self.levels[id]:
                self._promote(value, self.levels[id])
        key = (id, attr, value, acceptable)
        wme = self.wmes.get(key)
        if wme is not None:
            if inst is not None:
                if wme.support == I_SUPPORT:
                    wme.justifications.add(inst)
                wme.creators.append(inst)
                if support == O_SUPPORT and wme.support == I_SUPPORT:
                    # an operator application re-asserts it: hardens persistence
                    wme.support = O_SUPPORT
            return wme
        wme = WME(self._next_timetag, id, attr, value, acceptable, support)
        self._next_timetag += 1
        if inst is not None:
            if support == I_SUPPORT:
                wme.justifications.add(inst)
            wme.creators.append(inst)
        self.wmes[key] = wme
        self.by_id.setdefault(id, {})[key] = wme
        if isinstance(value, Identifier):
            self.incoming.setdefault(value, set()).add(key)
        self.pending_deltas.append(("add", wme))
        return wme

    def remove(self, wme: WME) -> None:
        key = wme.key()
        if key not in self.wmes:
            return
        del self.wmes[key]
        self.by_id[wme.id].pop(key, None)
        if isinstance(wme.value, Identifier):
            inc = self.incoming.get(wme.value)
            if inc is not None:
                inc.discard(key)
        self.pending_deltas.append(("remove", wme))

    def find(self, id: Identifier, attr: str, value: Symbol,
             acceptable: bool = False) -> WME | None:
        return self.wmes.get((id, attr, value, acceptable))

    def edges(self, id: Identifier) -> list[WME]:
        return list(self.by_id.get(id, {}).values())

    def _promote(self, ident: Identifier, level: int) -> None:
        # raise the identifier's subgraph to the shallower level
        stack = [ident]
        while stack:
            cur = stack.pop()
            if self.levels.get(cur, level) <= level:
                continue
            self.levels[cur] = level
            for wme in self.by_id.get(cur, {}).values():
                if isinstance(wme.value, Identifier):
                    stack.append(wme.value)

    # -- states -------------------------------------------------------------

    def topstate(self) -> State:
        return self.states[0]

    def deepest(self) -> State:
        return self.states[-1]

    def state_of(self, ident: Identifier) -> State | None:
        return self.state_by_id.get(ident)

    def is_state(self, ident: Identifier) -> bool:
        return ident in self.state_by_id

    # -- traversal ----------------------------------------------------------

    def reachable_from(self, roots: list[Identifier],
                       exclude_attrs: frozenset[str] = frozenset()) -> set[Identifier]:
        seen: set[Identifier] = set()
        stack = [r for r in roots if r in self.live_ids]
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            for wme in self.by_id.get(cur, {}).values():
                if wme.attr in exclude_attrs:
                    continue
                if isinstance(wme.value, Identifier) and wme.value not in seen:
                    stack.append(wme.value)
        return seen

    def dump(self, roots: list[Identifier] | None = None) -> str:
        """Printable WM listing: depth-first per state, ordered by timetag."""
        if roots is None:
            roots = [s.id for s in self.states]
        lines: list[str] = []
        emitted: set[tuple] = set()
        for root in roots:
            stack = [root]
            seen_ids: set[Identifier] = set()
            while stack:
                cur = stack.pop()
                if cur in seen_ids:
                    continue
                seen_ids.add(cur)
                children: list[Identifier] = []
                for wme in sorted(self.by_id.get(cur, {}).values(),
                                  key=lambda w: w.timetag):
                    if wme.key() in emitted:
                        continue
                    emitted.add(wme.key())
                    lines.append(str(wme))
                    if isinstance(wme.value, Identifier):
                        children.append(wme.value)
                stack.extend(reversed(children))
        return "\n".join(lines)
