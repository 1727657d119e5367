"""Bot utterance templates (one variant per speech style) and user patterns."""
from __future__ import annotations

import re
import string
from dataclasses import dataclass

STYLES = (
    ("male", "young"),
    ("female", "young"),
    ("male", "middle-aged"),
    ("female", "middle-aged"),
    ("male", "elderly"),
    ("female", "elderly"),
)


@dataclass(frozen=True)
class BotTemplate:
    template_id: str
    original: str
    variants: dict

    def text(self, style) -> str:
        return self.variants[tuple(style)]

    def placeholders(self) -> set[str]:
        names = set()
        for text in self.variants.values():
            names.update(f for _, f, _, _ in string.Formatter().parse(text) if f)
        return names


def _template(template_id, original, *texts):
    assert len(texts) == 6, template_id
    return BotTemplate(template_id, original, dict(zip(STYLES, texts)))


_API = "api_call {cuisine} {location} {party} {price}"

BOT_TEMPLATES = {
    t.template_id: t
    for t in (
        _template(
            "greeting", "hello what can i help you with today",
            "hey dude what is up",
            "hey girl how is it going",
            "hello sir what can i help you with",
            "hello maam how can i help you",
            "greetings sir what may i assist you with today",
            "good day madam how could i assist you today",
        ),
        _template(
            "on_it", "i'm on it",
            "i'm on your request",
            "be right back with your reservation",
            "i'm processing the request",
            "give me a second for processing the reservation",
            "excellent sir i will start the request now",
            "thank you madam i shall start the reservation now",
        ),
        _template(
            "ask_cuisine", "any preference on a type of cuisine",
            "what food are you looking for",
            "what food are you looking for",
            "what type of cuisine would you like to eat",
            "what type of cuisine would you like to eat",
            "may i know your preference on the type of cusine",
            # dialog evidence spells this cell "cuisine"
            "could you tell me your preference on the type of cuisine",
        ),
        _template(
            "ask_location", "where should it be",
            "where should it be",
            "where should it be",
            "where should it be located",
            "where should it be located",
            "may i know where the restaurant should be located",
            "could you tell me where the restaurant should be located",
        ),
        _template(
            "ask_price", "which price range are looking for",
            "what should the price be",
            "what should the price be",
            "which price range are you looking for",
            "which price range are you looking for",
            "may i know your prefered price range",
            "would you mind telling me your price range",
        ),
        _template(
            "ask_party", "how many people would be in your party",
            "how many are you",
            "how many are you",
            "how many people would be in your party",
            "how many people would be in your party",
            "may i know how many guests will be at your table",
            "would you mind telling me how many guests shall be at your table",
        ),
        _template("api_call", "api_call ...", *([_API] * 6)),
        _template(
            "any_update", "sure is there anything else to update",
            "cool anything else you want to update",
            "awesome is there any other update",
            "great is there anything else to modify",
            "great is there any other thing to modify",
            "i will modify your request is there anything else to change",
            "i shall modify your reservation is there any other change",
        ),
        _template(
            "options", "ok let me look into some options for you",
            "ok looking for options",
            "sure finding some options",
            "ok sir i'm looking for options for you",
            "sure maam i'm finding some options for you",
            "excellent sir please give me a moment to provide you with options",
            "thank you madam i shall provide you with options shortly",
        ),
        _template(
            "proposal", "what do you think of this option: ...",
            "is this one cool: {restaurant}",
            "how about this one: {restaurant}",
            "is this a good option: {restaurant}",
            "what do you think of this option: {restaurant}",
            "may i suggest this option: {restaurant}",
            "would you consider this option: {restaurant}",
        ),
        _template(
            "find_another", "sure let me find an other option for you",
            "ok looking for something else",
            "sure finding something else",
            "ok i'll look for a better option",
            "sure i'll find a better option",
            "yes sir i will look for another suitable option",
            "yes maam i shall find another suitable option",
        ),
        _template(
            "info", "here it is: ...",
            "here you go {info}",
            "here you go {info}",
            "here it is {info}",
            "here it is {info}",
            "here is the information you asked for {info}",
            "here is the information you asked for {info}",
        ),
        _template(
            "any_help", "is there anything i can help you with",
            "want anything else",
            "need something else",
            "is there anything i can help you with",
            "can i assist you with something else",
            "may i help you in any other way sir",
            "could i assist you in some other manner madam",
        ),
        _template(
            "reserve", "great let me do the reservation",
            "cool its done",
            "awesome you are done",
            "great i'll finalize the request",
            "great let me do the reservation",
            "excellent i will finalize your request",
            "thank you i shall finish your reservation",
        ),
        _template(
            "welcome", "you're welcome",
            "no problem",
            "happy to help",
            "you're welcome",
            "you're welcome",
            "it was a pleasure to be of help to you sir",
            "i am grateful to assist you madam",
        ),
    )
}

SLOT_QUESTIONS = {
    "cuisine": "ask_cuisine",
    "location": "ask_location",
    "party": "ask_party",
    "price": "ask_price",
}
# Order in which missing fields are asked for.
FIELD_ORDER = ("cuisine", "location", "party", "price")


class TemplateError(KeyError):
    pass


def render_bot_utterance(template_id: str, style, slots: dict | None = None) -> str:
    """Render ``template_id`` in the speech style ``(gender, age)``."""
    try:
        template = BOT_TEMPLATES[template_id]
    except KeyError:
        raise TemplateError(f"unknown bot template {template_id!r}") from None
    text = template.text(style)
    try:
        return text.format(**(slots or {}))
    except KeyError as exc:
        raise TemplateError(f"unbound placeholder {exc.args[0]!r} in {template_id!r}") from None


# ---------------------------------------------------------------------------
# user side: 43 surface patterns

SILENCE = "<SILENCE>"

USER_PATTERNS = {
    "greet": ("hi", "hello", "good morning", "hey"),
    "request": (
        "may i have a table",
        "can you make a restaurant reservation",
        "can you book a table",
        "i'd like to book a table",
    ),
    # field phrases appended to a request or an update
    "phrase_cuisine": ("with {cuisine} food", "with {cuisine} cuisine"),
    "phrase_location": ("in {location}",),
    "phrase_party": ("for {party}", "for {party} people"),
    "phrase_price": ("in a {price} price range",),
    "answer_cuisine": ("i love {cuisine} food", "{cuisine} cuisine please"),
    "answer_location": ("{location} please", "somewhere in {location}"),
    "answer_party": ("for {party} please", "we will be {party}"),
    "answer_price": ("in a {price} price range please", "a {price} restaurant would be great"),
    "update": (
        "actually i would prefer",
        "instead could it be",
        "can you make it",
        "i changed my mind i want it",
    ),
    "no": ("no",),
    "silence": (SILENCE,),
    "reject": ("no i don't like that", "no this does not work for me"),
    "accept": ("let's do it", "that looks great"),
    "book": ("can you make a restaurant reservation at {restaurant}",),
    "ask_contact": (
        "may i have the contact details of the restaurant",
        "what are the contact details of the restaurant",
        "can you give me the contact information",
    ),
    "ask_directions": (
        "may i have the directions to the restaurant",
        "how do i get to the restaurant",
        "can you tell me the way to the restaurant",
    ),
    "thanks": ("thank you", "thanks"),
    "closing": ("no thank you", "no thanks"),
}

N_USER_PATTERNS = sum(len(v) for v in USER_PATTERNS.values())


def field_phrase(field_name: str, value: str, variant: int) -> str:
    return USER_PATTERNS[f"phrase_{field_name}"][variant].format(**{field_name: value})


class PhraseMatcher:
    """Token-level matcher for user patterns with single-token slots.

    Slot values are validated against the domain of their field, so
    ``in {location}`` never captures the ``a`` of ``in a cheap price range``.
    """

    def __init__(self, domains: dict):
        self.domains = {k: frozenset(v) for k, v in domains.items()}
        self._compiled: dict[str, list[tuple[str, re.Pattern, list[str]]]] = {}

    def _compile(self, text: str):
        parts = []
        slots = []
        for literal, name, _, _ in string.Formatter().parse(text):
            parts.append(re.escape(literal))
            if name:
                parts.append(r"(\S+)")
                slots.append(name)
        return re.compile("".join(parts)), slots

    def patterns(self, intent: str):
        if intent not in self._compiled:
            self._compiled[intent] = [(t,) + self._compile(t) for t in USER_PATTERNS[intent]]
        return self._compiled[intent]

    def full_match(self, intent: str, text: str) -> dict | None:
        for _, regex, slots in self.patterns(intent):
            m = regex.fullmatch(text)
            if m and self._valid(slots, m.groups()):
                return dict(zip(slots, m.groups()))
        return None

    def prefix_match(self, intent: str, text: str):
        """Longest pattern of ``intent`` that starts ``text`` at a token boundary.

        Returns ``(slots, rest)`` or ``None``.
        """
        best = None
        for _, regex, slots in self.patterns(intent):
            m = regex.match(text)
            if not m or not self._valid(slots, m.groups()):
                continue
            rest = text[m.end():]
            if rest and not rest.startswith(" "):
                continue
            if best is None or m.end() > best[2]:
                best = (dict(zip(slots, m.groups())), rest.lstrip(" "), m.end())
        return None if best is None else best[:2]

    def _valid(self, slots, values) -> bool:
        return all(v in self.domains.get(s, (v,)) for s, v in zip(slots, values))

    def parse_fields(self, text: str) -> dict | None:
        """Parse a run of field phrases (``in rome with italian food ...``)."""
        fields: dict = {}
        rest = text
        while rest:
            for name in ("cuisine", "location", "party", "price"):
                hit = self.prefix_match(f"phrase_{name}", rest)
                if hit and name not in fields:
                    fields.update(hit[0])
                    rest = hit[1]
                    break
            else:
                return None
        return fields
