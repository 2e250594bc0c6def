"""Rule-based proactive engagement: affect trends, check-ins, propensity weights.

Decisions are pure functions of (trend, weight, clock, config, last emission),
so replays are deterministic and the caller owns emission bookkeeping.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum

from .model import EmotionState, EngineConfig

WEIGHT_MIN = 0.25
WEIGHT_MAX = 2.0
WEIGHT_UP = 1.1
WEIGHT_DOWN = 0.9

_CALENDAR_RE = re.compile(r"^calendar:.*\bat=(\d+(?:\.\d+)?)\b")


class Response(Enum):
    POSITIVE = "positive"
    NEUTRAL = "neutral"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class EmotionTrend:
    """Per-user exponentially weighted affect state."""

    user_id: str
    ema_valence: float = 0.0
    ema_arousal: float = 0.0
    sample_count: int = 0
    below_threshold_since: float | None = None
    last_t: float = 0.0


@dataclass(frozen=True)
class PropensityWeight:
    user_id: str
    weight: float = 1.0


@dataclass(frozen=True)
class CheckInEvent:
    user_id: str
    t: float
    reason: str  # "sustained_negative_affect" or "upcoming_event"
    detail: str = ""


@dataclass(frozen=True)
class Reminder:
    """Scheduled nudge ahead of a calendar event ingested as a system turn."""

    remind_at: float
    event_t: float
    text: str


def update_trend(trend: EmotionTrend, emotion: EmotionState, t: float, config: EngineConfig) -> EmotionTrend:
    """Fold one observation into the EMA with decay 2**(-dt / half-life)."""
    if t < trend.last_t:
        raise ValueError(f"trend time went backwards for {trend.user_id}")
    if trend.sample_count == 0:
        ema_v, ema_a = emotion.valence, emotion.arousal
    else:
        decay = 2.0 ** (-(t - trend.last_t) / config.ema_halflife)
        ema_v = decay * trend.ema_valence + (1.0 - decay) * emotion.valence
        ema_a = decay * trend.ema_arousal + (1.0 - decay) * emotion.arousal
    if ema_v < config.checkin_valence_threshold:
        since = trend.below_threshold_since if trend.below_threshold_since is not None else t
    else:
        since = None
    return replace(
        trend,
        ema_valence=ema_v,
        ema_arousal=ema_a,
        sample_count=trend.sample_count + 1,
        below_threshold_since=since,
        last_t=t,
    )


def decide_checkin(
    trend: EmotionTrend,
    weight: float,
    now: float,
    config: EngineConfig,
    last_checkin_at: float | None = None,
) -> CheckInEvent | None:
    """Emit a check-in when negative affect has been sustained long enough.

    The required sustained duration is checkin_window / weight, so a higher
    propensity weight fires sooner. Consecutive check-ins for a user are
    separated by at least checkin_window (cooldown).
    """
    if trend.below_threshold_since is None:
        return None
    if now - trend.below_threshold_since < config.checkin_window / weight:
        return None
    if last_checkin_at is not None and now - last_checkin_at < config.checkin_window:
        return None
    return CheckInEvent(trend.user_id, now, "sustained_negative_affect")


def due_reminder(
    user_id: str,
    reminders: list[Reminder],
    fired: set[int],
    now: float,
    config: EngineConfig,
    last_checkin_at: float | None = None,
) -> tuple[int, CheckInEvent] | None:
    """First unfired reminder whose lead window is open; respects the cooldown.

    Returns (index, event); reminders whose event time has already passed are
    skipped (the caller marks them fired to drop them).
    """
    if last_checkin_at is not None and now - last_checkin_at < config.checkin_window:
        return None
    for idx, reminder in enumerate(reminders):
        if idx in fired or reminder.event_t <= now or reminder.remind_at > now:
            continue
        return idx, CheckInEvent(user_id, now, "upcoming_event", reminder.text)
    return None


def apply_engagement_feedback(weight: PropensityWeight, response: Response) -> PropensityWeight:
    """Multiplicative propensity update, clamped to [0.25, 2.0]; Neutral is identity."""
    value = weight.weight
    if response is Response.POSITIVE:
        value *= WEIGHT_UP
    elif response is Response.NEGATIVE:
        value *= WEIGHT_DOWN
    value = max(WEIGHT_MIN, min(WEIGHT_MAX, value))
    return PropensityWeight(weight.user_id, value)


def parse_calendar_event(text: str) -> float | None:
    """Event epoch seconds from a `calendar: ... at=<epoch>` system turn, if any."""
    match = _CALENDAR_RE.match(text.strip())
    return float(match.group(1)) if match else None
