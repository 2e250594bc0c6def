"""Replay-event log format and the synthetic workload generator.

A workload is one canonical JSON record per line, timestamps non-decreasing.
The generator plans conversations per user per day (Poisson counts), scales
the total turn budget to a target, injects affect words from the bundled
lexicon, and marks a fraction of user turns as "important": those get a
distinctive token, a strong emotional charge, and one later turn of the same
user that references the token again. The matching recall spec records, for
every marked turn, the entry id it will receive, a query, and the content
tokens a surviving summary must still carry.

Entry ids are deterministic (sequential in ingest order), so the generator
can address future entries in feedback records. The corpus is synthetic by
construction; it mimics shape, not real conversation content.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from .model import DAY, EngineConfig, UtteranceType, f6
from .engagement import Response
from .textutils import content_tokens


class WorkloadError(ValueError):
    """Malformed replay log; carries the offending line number."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass
class ReplayEvent:
    t: float
    kind: str  # utterance | feedback | engagement_response | query | tick
    user_id: str = ""
    utterance_type: UtteranceType | None = None
    text: str = ""
    entry_id: int = 0
    action: str = ""  # pin | unpin | correct
    response: Response | None = None
    k: int = 0
    expected_ids: tuple[int, ...] = ()
    line: int = 0  # source line when parsed from a file

    def to_record(self) -> dict:
        rec: dict = {"kind": self.kind, "t": f6(self.t)}
        if self.kind == "utterance":
            rec["user_id"] = self.user_id
            rec["utterance_type"] = self.utterance_type.value
            rec["text"] = self.text
        elif self.kind == "feedback":
            rec["entry_id"] = self.entry_id
            rec["action"] = self.action
            if self.action == "correct":
                rec["text"] = self.text
        elif self.kind == "engagement_response":
            rec["user_id"] = self.user_id
            rec["response"] = self.response.value
        elif self.kind == "query":
            rec["user_id"] = self.user_id
            rec["text"] = self.text
            rec["k"] = self.k
            if self.expected_ids:
                rec["expected_ids"] = list(self.expected_ids)
        elif self.kind != "tick":
            raise WorkloadError(f"unknown event kind: {self.kind}")
        return rec

    @classmethod
    def from_record(cls, rec: dict, line: int = 0) -> "ReplayEvent":
        try:
            kind = rec["kind"]
            t = float(rec["t"])
            if kind == "utterance":
                return cls(
                    t,
                    kind,
                    user_id=rec["user_id"],
                    utterance_type=UtteranceType(rec["utterance_type"]),
                    text=rec["text"],
                    line=line,
                )
            if kind == "feedback":
                return cls(
                    t,
                    kind,
                    entry_id=int(rec["entry_id"]),
                    action=rec["action"],
                    text=rec.get("text", ""),
                    line=line,
                )
            if kind == "engagement_response":
                return cls(t, kind, user_id=rec["user_id"], response=Response(rec["response"]), line=line)
            if kind == "query":
                return cls(
                    t,
                    kind,
                    user_id=rec["user_id"],
                    text=rec["text"],
                    k=int(rec["k"]),
                    expected_ids=tuple(rec.get("expected_ids", ())),
                    line=line,
                )
            if kind == "tick":
                return cls(t, kind, line=line)
        except (KeyError, ValueError, TypeError) as exc:
            raise WorkloadError(f"bad replay record: {exc}", line) from None
        raise WorkloadError(f"unknown event kind: {kind}", line)


def write_log(events: list[ReplayEvent], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event.to_record(), sort_keys=True, separators=(",", ":"), ensure_ascii=False))
            fh.write("\n")


def parse_log(path) -> list[ReplayEvent]:
    events: list[ReplayEvent] = []
    previous = -math.inf
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise WorkloadError(f"not a JSON record: {exc}", lineno) from None
            event = ReplayEvent.from_record(rec, line=lineno)
            if event.t < previous:
                raise WorkloadError("timestamps must be non-decreasing", lineno)
            previous = event.t
            events.append(event)
    return events


# ---------------------------------------------------------------------------
# Recall spec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RecallProbe:
    entry_id: int
    user_id: str
    kind: str  # important | minor
    query: str
    content_tokens: tuple[str, ...]


@dataclass
class RecallSpec:
    k: int = 5
    probes: list[RecallProbe] = field(default_factory=list)

    def save(self, path) -> None:
        doc = {
            "k": self.k,
            "probes": [
                {
                    "content_tokens": list(p.content_tokens),
                    "entry_id": p.entry_id,
                    "kind": p.kind,
                    "query": p.query,
                    "user_id": p.user_id,
                }
                for p in self.probes
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RecallSpec":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(
            k=int(doc["k"]),
            probes=[
                RecallProbe(
                    entry_id=int(p["entry_id"]),
                    user_id=p["user_id"],
                    kind=p["kind"],
                    query=p["query"],
                    content_tokens=tuple(p["content_tokens"]),
                )
                for p in doc["probes"]
            ],
        )


# ---------------------------------------------------------------------------
# Synthetic workload generation
# ---------------------------------------------------------------------------

_NOUNS = [
    "garden", "bakery", "harbor", "museum", "workshop", "library", "market",
    "orchard", "station", "studio", "meadow", "kitchen", "theater", "bridge",
    "attic", "balcony", "courtyard", "bookshop", "greenhouse", "lighthouse",
]
_PEOPLE = ["marta", "jonas", "priya", "theo", "nadia", "felix", "irene", "omar"]
_ACTIVITIES = [
    "sorting old photographs", "fixing the bicycle", "baking rye bread",
    "repotting the ferns", "practicing the violin", "planning the trip",
    "painting the fence", "writing postcards", "learning to juggle",
    "organizing the shelves",
]
_USER_TEMPLATES = [
    "spent the morning at the {noun} with {person}.",
    "i was {activity} most of today.",
    "went past the {noun} on my way home.",
    "talked with {person} about {activity}.",
    "quiet day. mostly {activity}.",
    "the {noun} was crowded again this afternoon.",
    "{person} came by and we ended up {activity}.",
    "thinking about visiting the {noun} this weekend.",
]
_COMPANION_TEMPLATES = [
    "that sounds like a full day. how was the {noun}?",
    "tell me more about {activity}.",
    "do you go to the {noun} often?",
    "it is nice that {person} was around.",
    "what part of {activity} did you enjoy most?",
]
_MOOD_WORDS = {
    "happy": ["happy", "glad", "wonderful", "grateful"],
    "sad": ["sad", "lonely", "gloomy", "tired"],
    "angry": ["angry", "annoyed", "furious"],
    "anxious": ["anxious", "worried", "nervous", "stressed"],
}
_STRONG_MOODS = {
    "happy": ["excited", "amazing"],
    "sad": ["heartbroken", "miserable"],
    "angry": ["furious", "rage"],
    "anxious": ["panic", "overwhelmed"],
}
# Important events get their own vocabulary: life events users would bring
# up again, lexically distinct from everyday small talk above.
_EVENT_NOUNS = [
    "promotion", "audition", "diagnosis", "engagement", "scholarship",
    "eviction", "reunion", "graduation", "inheritance", "transfer",
    "surgery", "adoption", "retirement", "recital", "verdict",
    "anniversary", "relocation", "internship", "tournament", "premiere",
    "farewell", "breakthrough", "setback", "windfall", "deadline",
]
_MARKER_SYLLABLES = ["vel", "tor", "mira", "zan", "kor", "lun", "pora", "quin", "sol", "fen", "ria"]

DAY_START = 8 * 3600.0  # conversations happen between 08:00 and 22:00
DAY_WINDOW = 14 * 3600.0


def _poisson(rng: random.Random, mean: float) -> int:
    # Knuth's method; fine for small means
    limit = math.exp(-mean)
    k, p = 0, 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


@dataclass
class _Turn:
    user: str
    t: float
    utype: UtteranceType
    text: str = ""
    role: str = "plain"  # plain | important | reref | minor
    marker: str = ""
    event: ReplayEvent | None = None
    entry_id: int = 0


def generate_workload(
    seed: int = 42,
    users: int = 38,
    days: int = 28,
    conv_per_day: float = 7.9,
    turns_per_conv: float = 2.0,
    target_turns: int = 11_504,
    important_fraction: float = 0.1,
    minor_fraction: float = 0.1,
    t0: float = 1_735_689_600.0,  # 2025-01-01T00:00Z
) -> tuple[list[ReplayEvent], RecallSpec]:
    """Deterministic synthetic workload plus its recall spec."""
    if users <= 0 or conv_per_day <= 0 or turns_per_conv <= 0:
        raise ValueError("workload parameters must be positive")
    rng = random.Random(seed)
    user_ids = [f"u{i:02d}" for i in range(1, users + 1)]

    # 1. plan conversations and raw turn budgets
    plan: list[tuple[str, float, int]] = []  # (user, start_t, raw_turns)
    for user in user_ids:
        for day in range(days):
            n_conv = _poisson(rng, conv_per_day)
            if n_conv == 0:
                continue
            slot = DAY_WINDOW / n_conv
            for c in range(n_conv):
                start = t0 + day * DAY + DAY_START + c * slot + rng.uniform(0, slot * 0.3)
                raw = max(1, _poisson(rng, turns_per_conv - 1.0) + 1)
                plan.append((user, start, raw))

    # 2. scale turn counts to the target with largest-remainder rounding
    total_raw = sum(raw for _, _, raw in plan)
    if target_turns and total_raw:
        quotas = [raw * target_turns / total_raw for _, _, raw in plan]
        counts = [int(q) for q in quotas]
        short = target_turns - sum(counts)
        order = sorted(range(len(plan)), key=lambda i: quotas[i] - counts[i], reverse=True)
        for i in order[:short]:
            counts[i] += 1
    else:
        counts = [raw for _, _, raw in plan]

    # 3. materialize turns (alternating user / companion, user first)
    turns: list[_Turn] = []
    for (user, start, _), n in zip(plan, counts):
        if n == 0:
            continue
        spacing = min(45.0, (DAY_WINDOW / 4) / (n + 1))
        for i in range(n):
            utype = UtteranceType.USER if i % 2 == 0 else UtteranceType.COMPANION
            turns.append(_Turn(user, start + i * spacing + rng.uniform(0, 5), utype))

    # 4. choose important turns and their later re-reference slots
    markers_used: set[str] = set()
    by_user: dict[str, list[_Turn]] = {}
    for turn in turns:
        if turn.utype is UtteranceType.USER:
            by_user.setdefault(turn.user, []).append(turn)
    for user in user_ids:
        slots = sorted(by_user.get(user, []), key=lambda tr: tr.t)
        for idx, turn in enumerate(slots):
            if turn.role != "plain" or rng.random() >= important_fraction:
                continue
            horizon = [
                s
                for s in slots[idx + 1 :]
                if s.role == "plain" and turn.t + 0.5 * DAY <= s.t <= turn.t + 6 * DAY
            ] or [s for s in slots[idx + 1 :] if s.role == "plain"]
            if not horizon:
                continue
            reref = rng.choice(horizon)
            while True:
                marker = "".join(rng.choice(_MARKER_SYLLABLES) for _ in range(2)) + str(rng.randint(10, 99))
                if marker not in markers_used:
                    markers_used.add(marker)
                    break
            turn.role, turn.marker = "important", marker
            reref.role, reref.marker = "reref", marker

    # 5. texts
    def plain_text(utype: UtteranceType) -> str:
        template = rng.choice(_USER_TEMPLATES if utype is UtteranceType.USER else _COMPANION_TEMPLATES)
        text = template.format(
            noun=rng.choice(_NOUNS), person=rng.choice(_PEOPLE), activity=rng.choice(_ACTIVITIES)
        )
        if utype is UtteranceType.USER and rng.random() < 0.35:
            mood = rng.choice(list(_MOOD_WORDS))
            text += f" feeling {rng.choice(_MOOD_WORDS[mood])} about it."
        return text

    event_detail: dict[str, tuple[str, str]] = {}  # marker -> (event noun, person)
    for turn in turns:
        if turn.role == "important":
            mood = rng.choice(list(_STRONG_MOODS))
            strong = rng.sample(_STRONG_MOODS[mood], k=min(2, len(_STRONG_MOODS[mood])))
            event = rng.choice(_EVENT_NOUNS)
            person = rng.choice(_PEOPLE)
            event_detail[turn.marker] = (event, person)
            turn.text = (
                f"the {event} {turn.marker} with {person} is real now."
                f" i feel {strong[0]} and {' '.join(strong[1:]) or strong[0]} about it."
            )
    for turn in turns:
        if turn.role == "reref":
            event, _person = event_detail[turn.marker]
            turn.text = f"still thinking about the {event} {turn.marker}. it stays with me."
        elif turn.role == "plain":
            turn.text = plain_text(turn.utype)

    # 6. mark minor probes among untouched user turns
    for user in user_ids:
        for turn in by_user.get(user, []):
            if turn.role == "plain" and rng.random() < minor_fraction:
                turn.role = "minor"

    # 7. assemble events: turns + system calendar + engagement + ticks
    events: list[ReplayEvent] = []
    for turn in turns:
        event = ReplayEvent(turn.t, "utterance", user_id=turn.user, utterance_type=turn.utype, text=turn.text)
        turn.event = event
        events.append(event)
    for user in user_ids:
        first_calendar_day = rng.randint(1, 6)
        for day in range(first_calendar_day, days, 7):
            at = t0 + (day + 2) * DAY + 10 * 3600
            when = t0 + day * DAY + rng.uniform(DAY_START, DAY_START + DAY_WINDOW)
            events.append(
                ReplayEvent(
                    when,
                    "utterance",
                    user_id=user,
                    utterance_type=UtteranceType.SYSTEM,
                    text=f"calendar: {rng.choice(['checkup', 'deadline', 'visit', 'interview'])} at={at:.0f}",
                )
            )
        for day in range(days):
            if rng.random() < 0.08:
                when = t0 + day * DAY + rng.uniform(DAY_START, DAY_START + DAY_WINDOW)
                events.append(
                    ReplayEvent(when, "engagement_response", user_id=user, response=rng.choice(list(Response)))
                )
    for day in range(1, days + 1):
        events.append(ReplayEvent(t0 + day * DAY, "tick"))

    events.sort(key=lambda e: e.t)

    # 8. assign prospective entry ids (sequential in ingest order)
    next_id = 1
    for event in events:
        if event.kind == "utterance":
            event.entry_id = next_id
            next_id += 1
    for turn in turns:
        turn.entry_id = turn.event.entry_id

    # 9. feedback on a slice of important turns, queries, and the recall spec
    extra: list[ReplayEvent] = []
    probes: list[RecallProbe] = []
    for turn in turns:
        if turn.role == "important":
            if rng.random() < 0.15:
                extra.append(
                    ReplayEvent(turn.t + rng.uniform(300, 1800), "feedback", entry_id=turn.entry_id, action="pin")
                )
            event, person = event_detail[turn.marker]
            probes.append(
                RecallProbe(
                    entry_id=turn.entry_id,
                    user_id=turn.user,
                    kind="important",
                    query=f"{turn.marker} {event} {person}",
                    content_tokens=tuple(sorted(content_tokens(turn.text))),
                )
            )
        elif turn.role == "minor":
            tokens = [t for t in turn.text.split() if t.isalpha()][:5]
            probes.append(
                RecallProbe(
                    entry_id=turn.entry_id,
                    user_id=turn.user,
                    kind="minor",
                    query=" ".join(tokens) if tokens else turn.text[:30],
                    content_tokens=tuple(sorted(content_tokens(turn.text))),
                )
            )
    for user in user_ids:
        for day in range(3, days, 9):
            when = t0 + day * DAY + 21 * 3600 + rng.uniform(0, 1800)
            extra.append(ReplayEvent(when, "query", user_id=user, text=rng.choice(_NOUNS), k=3))

    events.extend(extra)
    events.sort(key=lambda e: e.t)
    return events, RecallSpec(k=5, probes=probes)
