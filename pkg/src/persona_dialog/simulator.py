"""Dialog generation for the five personalized restaurant tasks."""
from __future__ import annotations

from dataclasses import dataclass, field

from .kb import (
    PARTY_SIZES,
    PRICES,
    KnowledgeBase,
    Restaurant,
    UserProfile,
    api_call_lookup,
    kb_facts,
    proposal_order,
    sample_profile,
)
from .numerics import Rng
from .templates import (
    FIELD_ORDER,
    SILENCE,
    SLOT_QUESTIONS,
    USER_PATTERNS,
    field_phrase,
    render_bot_utterance,
)

TASKS = ("PT1", "PT2", "PT3", "PT4", "PT5")
FULL_PROFILE_TASKS = ("PT3", "PT5")
ACCEPT_PROBABILITY = 0.25

PROFILE, FACT, EXCHANGE = "profile", "fact", "exchange"


@dataclass(frozen=True)
class DialogTurn:
    kind: str
    text: str
    bot: str | None = None

    @property
    def is_exchange(self) -> bool:
        return self.kind == EXCHANGE


@dataclass(frozen=True)
class Dialog:
    profile: UserProfile
    turns: tuple
    task_id: str | None = None

    def exchanges(self) -> list[tuple[int, DialogTurn]]:
        return [(i, t) for i, t in enumerate(self.turns) if t.kind == EXCHANGE]


@dataclass(frozen=True)
class ApiCall:
    cuisine: str
    location: str
    party: str
    price: str

    def render(self) -> str:
        return f"api_call {self.cuisine} {self.location} {self.party} {self.price}"

    def fields(self) -> dict:
        return {"cuisine": self.cuisine, "location": self.location, "party": self.party, "price": self.price}

    @classmethod
    def of(cls, r: Restaurant) -> "ApiCall":
        return cls(r.cuisine, r.location, r.party_size, r.price)


def contact_info(r: Restaurant, profile: UserProfile) -> str:
    return r.social_media if profile.age == "young" else r.phone


def directions_info(r: Restaurant) -> str:
    return f"{r.address} {r.public_transport if r.price == 'cheap' else r.parking}"


@dataclass
class _Builder:
    rng: Rng
    profile: UserProfile
    visible_profile: UserProfile
    turns: list = field(default_factory=list)

    def __post_init__(self):
        self.turns.append(DialogTurn(PROFILE, self.visible_profile.line()))

    def say(self, user: str, template_id: str, **slots) -> None:
        self.turns.append(DialogTurn(EXCHANGE, user, render_bot_utterance(template_id, self.profile.style, slots)))

    def user(self, intent: str, **slots) -> str:
        return self.rng.choice(USER_PATTERNS[intent]).format(**slots)

    def facts(self, restaurants) -> None:
        for r in restaurants:
            for f in kb_facts(r):
                self.turns.append(DialogTurn(FACT, f.render()))

    def dialog(self, task_id: str) -> Dialog:
        return Dialog(self.visible_profile, tuple(self.turns), task_id)

    # -- phases ---------------------------------------------------------

    def slot_filling(self, call: ApiCall) -> None:
        """Greeting, request with 0-4 fields, questions for the rest, options."""
        values = call.fields()
        self.say(self.user("greet"), "greeting")
        k = self.rng.randint(5)
        given = self.rng.shuffled(self.rng.sample(FIELD_ORDER, k))
        request = self.user("request")
        for name in given:
            request += " " + field_phrase(name, values[name], self.rng.randint(len(USER_PATTERNS[f"phrase_{name}"])))
        self.say(request, "on_it")
        missing = [f for f in FIELD_ORDER if f not in given]
        user = SILENCE
        for name in missing:
            self.say(user, SLOT_QUESTIONS[name])
            user = self.user(f"answer_{name}", **{name: values[name]})
        self.say(user, "options")

    def api_call(self, call: ApiCall) -> None:
        self.say(SILENCE, "api_call", **call.fields())

    def propose(self, ranked: list) -> Restaurant:
        """Propose in ranked order until the user accepts; returns the booking."""
        for i, r in enumerate(ranked):
            self.say(SILENCE, "proposal", restaurant=r.name)
            last = i == len(ranked) - 1
            if accepts(self.rng, last):
                self.say(self.user("accept"), "reserve")
                return r
            self.say(self.user("reject"), "find_another")
        raise AssertionError("unreachable: the last proposal is always accepted")

    def extra_info(self, r: Restaurant) -> None:
        draw = self.rng.random()
        if draw < 0.25:
            asks = ["directions"]
        elif draw < 0.5:
            asks = ["contact"]
        else:
            asks = self.rng.shuffled(["contact", "directions"])
        for ask in asks:
            if ask == "contact":
                self.say(self.user("ask_contact"), "info", info=contact_info(r, self.profile))
            else:
                self.say(self.user("ask_directions"), "info", info=directions_info(r))
        self.say(self.user("thanks"), "any_help")
        self.say(self.user("closing"), "welcome")


def accepts(rng: Rng, last: bool) -> bool:
    draw = rng.random()
    return last or draw < ACCEPT_PROBABILITY


def _start(rng: Rng, kb: KnowledgeBase, task_id: str, full_profile: bool | None):
    target = rng.choice(kb.restaurants)
    profile = sample_profile(rng, target.cuisine, kb.dish_lists)
    show_all = task_id in FULL_PROFILE_TASKS if full_profile is None else full_profile
    return target, _Builder(rng, profile, profile.visible(show_all))


def gen_task1(rng: Rng, kb: KnowledgeBase, full_profile: bool | None = None) -> Dialog:
    target, b = _start(rng, kb, "PT1", full_profile)
    call = ApiCall.of(target)
    b.slot_filling(call)
    b.api_call(call)
    return b.dialog("PT1")


def update_values(kb: KnowledgeBase) -> dict:
    return {"cuisine": kb.cuisines, "location": kb.locations, "party": PARTY_SIZES, "price": PRICES}


def gen_task2(rng: Rng, kb: KnowledgeBase, full_profile: bool | None = None) -> Dialog:
    target, b = _start(rng, kb, "PT2", full_profile)
    call = ApiCall.of(target)
    b.slot_filling(call)
    b.api_call(call)
    values = call.fields()
    domains = update_values(kb)
    for _ in range(1 + rng.randint(4)):
        name = rng.choice(FIELD_ORDER)
        new = rng.choice([v for v in domains[name] if v != values[name]])
        values[name] = new
        b.say(b.user("update") + " " + field_phrase(name, new, rng.randint(len(USER_PATTERNS[f"phrase_{name}"]))), "any_update")
    b.say(b.user("no"), "options")
    b.api_call(ApiCall(**values))
    return b.dialog("PT2")


def gen_task3(rng: Rng, kb: KnowledgeBase, full_profile: bool | None = None) -> Dialog:
    target, b = _start(rng, kb, "PT3", full_profile)
    call = ApiCall.of(target)
    results = api_call_lookup(kb, call.cuisine, call.location, call.price, call.party)
    if not results:
        raise RuntimeError(f"empty lookup for {call.render()}")
    b.facts(rng.shuffled(results))
    b.slot_filling(call)
    b.propose(proposal_order(results, b.profile))
    return b.dialog("PT3")


def gen_task4(rng: Rng, kb: KnowledgeBase, full_profile: bool | None = None) -> Dialog:
    target, b = _start(rng, kb, "PT4", full_profile)
    b.facts([target])
    b.say(b.user("greet"), "greeting")
    b.say(b.user("book", restaurant=target.name), "reserve")
    b.extra_info(target)
    return b.dialog("PT4")


def gen_task5(rng: Rng, kb: KnowledgeBase, full_profile: bool | None = None) -> Dialog:
    target, b = _start(rng, kb, "PT5", full_profile)
    call = ApiCall.of(target)
    b.slot_filling(call)
    b.api_call(call)
    results = api_call_lookup(kb, call.cuisine, call.location, call.price, call.party)
    b.facts(rng.shuffled(results))
    booked = b.propose(proposal_order(results, b.profile))
    b.extra_info(booked)
    return b.dialog("PT5")


GENERATORS = {
    "PT1": gen_task1,
    "PT2": gen_task2,
    "PT3": gen_task3,
    "PT4": gen_task4,
    "PT5": gen_task5,
}


def task_id(task) -> str:
    """Normalize ``3``, ``"3"``, ``"pt3"`` to ``"PT3"``."""
    text = str(task).upper()
    if not text.startswith("PT"):
        text = "PT" + text
    if text not in GENERATORS:
        raise ValueError(f"unknown task {task!r}")
    return text


def generate_dialog(task, rng: Rng, kb: KnowledgeBase, full_profile: bool | None = None) -> Dialog:
    return GENERATORS[task_id(task)](rng, kb, full_profile)
