"""Rule-based responder that re-derives every bot turn of a generated dialog."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .kb import (
    DEFAULT_DISHES,
    DEFAULT_LOCATIONS,
    PARTY_SIZES,
    PRICES,
    KbFact,
    UserProfile,
    group_facts,
    proposal_order,
    restaurant_from_facts,
)
from .simulator import EXCHANGE, FACT, ApiCall, Dialog, contact_info, directions_info
from .templates import FIELD_ORDER, SILENCE, SLOT_QUESTIONS, PhraseMatcher, render_bot_utterance


class UnknownIntentError(ValueError):
    """The user utterance matches none of the known patterns (or not in this state)."""


class CorpusInconsistency(ValueError):
    """The oracle's answer is not among the candidates, or disagrees with the gold."""


@dataclass(frozen=True)
class DialogState:
    phase: str = "start"
    fields: tuple = ()
    asked: str | None = None
    ranked: tuple = ()
    cursor: int = 0
    booked: str | None = None

    def field_map(self) -> dict:
        return dict(self.fields)


def default_matcher() -> PhraseMatcher:
    return PhraseMatcher({
        "cuisine": tuple(DEFAULT_DISHES),
        "location": DEFAULT_LOCATIONS,
        "party": PARTY_SIZES,
        "price": PRICES,
        "restaurant": (),
    })


class Oracle:
    """Exact-pattern intent recognizer plus the simulator's decision rules."""

    def __init__(self, matcher: PhraseMatcher | None = None):
        self.matcher = matcher or default_matcher()
        # restaurant names are open-ended; validate their shape only
        self.matcher.domains.pop("restaurant", None)

    # -- intent recognition ----------------------------------------------

    def recognize(self, text: str) -> tuple[str, dict]:
        if text == SILENCE:
            return "silence", {}
        for intent in ("greet", "no", "reject", "accept", "thanks", "closing",
                       "ask_contact", "ask_directions", "book",
                       "answer_cuisine", "answer_location", "answer_party", "answer_price"):
            slots = self.matcher.full_match(intent, text)
            if slots is not None:
                return intent, slots
        for intent in ("request", "update"):
            hit = self.matcher.prefix_match(intent, text)
            if hit is None:
                continue
            fields = self.matcher.parse_fields(hit[1])
            if fields is None:
                continue
            if intent == "update" and len(fields) != 1:
                continue
            return intent, fields
        raise UnknownIntentError(f"unrecognized user utterance: {text!r}")

    # -- decision rules ---------------------------------------------------

    def step(self, state: DialogState, profile: UserProfile, user_text: str,
             facts: Sequence[KbFact] = ()) -> tuple[str, DialogState]:
        intent, slots = self.recognize(user_text)
        style = profile.style
        phase = state.phase

        def say(template_id, **kw):
            return render_bot_utterance(template_id, style, kw)

        if intent == "greet":
            return say("greeting"), replace(state, phase="greeted")
        if intent == "request":
            fields = state.field_map() | slots
            return say("on_it"), replace(state, phase="requested", fields=tuple(sorted(fields.items())))
        if intent == "silence":
            if phase == "requested":
                return self._ask_next(state, say)
            if phase == "ready" and not facts:
                return self._api_call(state, say)
            if phase in ("ready", "called") and facts:
                ranked = tuple(r.name for r in proposal_order(
                    [restaurant_from_facts(fs) for fs in group_facts(facts).values()], profile))
                state = replace(state, phase="proposing", ranked=ranked, cursor=0)
                return say("proposal", restaurant=ranked[0]), state
            if phase == "rejected":
                return say("proposal", restaurant=state.ranked[state.cursor]), replace(state, phase="proposing")
        if intent.startswith("answer_") and phase == "asking" and intent[len("answer_"):] == state.asked:
            fields = state.field_map() | slots
            return self._ask_next(replace(state, fields=tuple(sorted(fields.items()))), say)
        if intent == "update" and phase in ("called", "updating"):
            fields = state.field_map() | slots
            return say("any_update"), replace(state, phase="updating", fields=tuple(sorted(fields.items())))
        if intent == "no" and phase == "updating":
            return say("options"), replace(state, phase="ready")
        if intent == "reject" and phase == "proposing":
            if state.cursor + 1 >= len(state.ranked):
                raise UnknownIntentError("rejected the last remaining option")
            return say("find_another"), replace(state, phase="rejected", cursor=state.cursor + 1)
        if intent == "accept" and phase == "proposing":
            return say("reserve"), replace(state, phase="booked", booked=state.ranked[state.cursor])
        if intent == "book" and phase in ("start", "greeted"):
            return say("reserve"), replace(state, phase="booked", booked=slots["restaurant"])
        if intent in ("ask_contact", "ask_directions") and phase in ("booked", "info"):
            booked = self._booked(state, facts)
            info = contact_info(booked, profile) if intent == "ask_contact" else directions_info(booked)
            return say("info", info=info), replace(state, phase="info")
        if intent == "thanks" and phase == "info":
            return say("any_help"), replace(state, phase="thanked")
        if intent == "closing" and phase == "thanked":
            return say("welcome"), replace(state, phase="closed")
        raise UnknownIntentError(f"intent {intent!r} not expected in phase {phase!r}")

    def _ask_next(self, state: DialogState, say):
        filled = state.field_map()
        missing = [f for f in FIELD_ORDER if f not in filled]
        if missing:
            return say(SLOT_QUESTIONS[missing[0]]), replace(state, phase="asking", asked=missing[0])
        return say("options"), replace(state, phase="ready", asked=None)

    def _api_call(self, state: DialogState, say):
        call = ApiCall(**state.field_map())
        return say("api_call", **call.fields()), replace(state, phase="called")

    def _booked(self, state: DialogState, facts):
        mine = [f for f in facts if f.subject == state.booked]
        if not mine:
            raise UnknownIntentError(f"no facts visible for booked restaurant {state.booked!r}")
        return restaurant_from_facts(mine)

    def rank(self, state, profile, user_text, facts, candidate_index: dict) -> tuple[int, DialogState]:
        """Index of the oracle's answer in the candidate list."""
        bot, state = self.step(state, profile, user_text, facts)
        try:
            return candidate_index[bot], state
        except KeyError:
            raise CorpusInconsistency(f"oracle answer not among candidates: {bot!r}") from None


_DEFAULT = None


def _default_oracle() -> Oracle:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Oracle()
    return _DEFAULT


def oracle_step(state: DialogState, profile: UserProfile, user_text: str, facts: Sequence[KbFact] = ()):
    return _default_oracle().step(state, profile, user_text, facts)


def oracle_rank(state: DialogState, profile: UserProfile, user_text: str, facts, candidate_index: dict):
    return _default_oracle().rank(state, profile, user_text, facts, candidate_index)


def replay(dialog: Dialog, oracle: Oracle | None = None):
    """Yield ``(turn_index, predicted, gold)`` for every exchange of ``dialog``."""
    oracle = oracle or _default_oracle()
    state = DialogState()
    facts: list[KbFact] = []
    for i, turn in enumerate(dialog.turns):
        if turn.kind == FACT:
            facts.append(KbFact.parse(turn.text))
        elif turn.kind == EXCHANGE:
            predicted, state = oracle.step(state, dialog.profile, turn.text, facts)
            yield i, predicted, turn.bot
