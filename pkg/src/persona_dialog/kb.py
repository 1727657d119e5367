"""Restaurant knowledge base with personalization attributes."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .numerics import Rng

PRICES = ("cheap", "moderate", "expensive")
PARTY_SIZES = ("two", "four", "six", "eight")
RATINGS = tuple(range(1, 9))
DIETS = ("veg", "non-veg")
GENDERS = ("male", "female")
AGES = ("young", "middle-aged", "elderly")
PROFILE_STYLES = tuple((g, a) for a in AGES for g in GENDERS)

RELATIONS = (
    "R_phone",
    "R_cuisine",
    "R_address",
    "R_location",
    "R_number",
    "R_price",
    "R_rating",
    "R_type",
    "R_speciality",
    "R_social_media",
    "R_parking",
    "R_public_transport",
)

DEFAULT_DISHES = {
    "british": ("fish_and_chips", "roast_beef", "shepherds_pie", "pudding"),
    "cantonese": ("dim_sum", "char_siu", "wonton", "congee"),
    "french": ("ratatouille", "croissant", "escargot", "quiche"),
    "indian": ("biryani", "tandoori", "paneer", "curry"),
    "italian": ("pizza", "pasta", "risotto", "lasagna"),
    "japanese": ("sushi", "ramen", "tempura", "udon"),
    "korean": ("bibimbap", "kimchi", "bulgogi", "tteokbokki"),
    "spanish": ("paella", "tapas", "tortilla", "gazpacho"),
    "thai": ("pad_thai", "green_curry", "tom_yum", "satay"),
    "vietnamese": ("pho", "banh_mi", "spring_rolls", "bun_cha"),
}

DEFAULT_LOCATIONS = (
    "bangkok", "beijing", "bombay", "hanoi", "london",
    "madrid", "paris", "rome", "seoul", "tokyo",
)

# Held-out half B carries the entities never seen in training dialogs.
DEFAULT_HALF_A_CUISINES = ("british", "french", "indian", "italian", "spanish")
DEFAULT_HALF_A_LOCATIONS = ("bombay", "london", "madrid", "paris", "rome")


class KbConfigError(ValueError):
    pass


@dataclass(frozen=True)
class KbConfig:
    cuisines: tuple = tuple(DEFAULT_DISHES)
    locations: tuple = DEFAULT_LOCATIONS
    dishes: dict = field(default_factory=lambda: dict(DEFAULT_DISHES))
    half_a_cuisines: tuple = DEFAULT_HALF_A_CUISINES
    half_a_locations: tuple = DEFAULT_HALF_A_LOCATIONS

    def validate(self) -> None:
        for label, values in (("cuisine", self.cuisines), ("location", self.locations)):
            if len(set(values)) != len(values):
                raise KbConfigError(f"duplicate {label} labels in {values}")
            if len(values) != 10:
                raise KbConfigError(f"expected 10 {label} labels, got {len(values)}")
        for c in self.cuisines:
            if len(self.dishes.get(c, ())) != 4:
                raise KbConfigError(f"cuisine {c!r} needs exactly 4 dishes")
        if not set(self.half_a_cuisines) <= set(self.cuisines) or len(set(self.half_a_cuisines)) != 5:
            raise KbConfigError("half A must hold 5 of the configured cuisines")
        if not set(self.half_a_locations) <= set(self.locations) or len(set(self.half_a_locations)) != 5:
            raise KbConfigError("half A must hold 5 of the configured locations")

    def half(self, half_id: str) -> tuple[tuple, tuple]:
        if half_id == "A":
            return tuple(self.half_a_cuisines), tuple(self.half_a_locations)
        cuisines = tuple(c for c in self.cuisines if c not in self.half_a_cuisines)
        locations = tuple(loc for loc in self.locations if loc not in self.half_a_locations)
        return cuisines, locations


@dataclass(frozen=True)
class UserProfile:
    gender: str
    age: str
    diet: str | None = None
    favorite: str | None = None

    @property
    def style(self) -> tuple[str, str]:
        return (self.gender, self.age)

    def attributes(self) -> list[str]:
        return [a for a in (self.gender, self.age, self.diet, self.favorite) if a is not None]

    def line(self) -> str:
        return " ".join(self.attributes())

    def visible(self, full: bool) -> "UserProfile":
        """The profile as shown to models: style only unless ``full``."""
        return self if full else UserProfile(self.gender, self.age)


@dataclass(frozen=True)
class KbFact:
    subject: str
    relation: str
    value: str

    def render(self) -> str:
        return f"{self.subject} {self.relation} {self.value}"

    @classmethod
    def parse(cls, text: str) -> "KbFact":
        parts = text.split(" ")
        if len(parts) != 3 or parts[1] not in RELATIONS:
            raise ValueError(f"not a KB fact: {text!r}")
        return cls(*parts)


@dataclass(frozen=True)
class Restaurant:
    location: str
    cuisine: str
    price: str
    rating: int
    index: int
    party_size: str
    speciality: str

    @property
    def name(self) -> str:
        return f"resto_{self.location}_{self.price}_{self.cuisine}_{self.rating}stars_{self.index}"

    @property
    def diet_type(self) -> str:
        return "veg" if self.index == 1 else "non-veg"

    def token(self, attribute: str) -> str:
        return f"{self.name}_{attribute}"

    phone = property(lambda self: self.token("phone"))
    address = property(lambda self: self.token("address"))
    social_media = property(lambda self: self.token("social_media"))
    parking = property(lambda self: self.token("parking"))
    public_transport = property(lambda self: self.token("public_transport"))


def kb_facts(r: Restaurant) -> list[KbFact]:
    values = (
        r.phone, r.cuisine, r.address, r.location, r.party_size, r.price,
        str(r.rating), r.diet_type, r.speciality, r.social_media, r.parking, r.public_transport,
    )
    return [KbFact(r.name, rel, val) for rel, val in zip(RELATIONS, values)]


def lookup_order(r: Restaurant):
    return (-r.rating, r.index, r.name)


@dataclass
class KnowledgeBase:
    half_id: str
    restaurants: tuple
    dish_lists: dict

    def __post_init__(self):
        self._index: dict[tuple, list[Restaurant]] = {}
        for r in self.restaurants:
            self._index.setdefault((r.cuisine, r.location, r.price, r.party_size), []).append(r)
        for hits in self._index.values():
            hits.sort(key=lookup_order)
        self._by_name = {r.name: r for r in self.restaurants}

    @property
    def cuisines(self) -> tuple:
        return tuple(sorted({r.cuisine for r in self.restaurants}))

    @property
    def locations(self) -> tuple:
        return tuple(sorted({r.location for r in self.restaurants}))

    def __len__(self) -> int:
        return len(self.restaurants)

    def get(self, name: str) -> Restaurant:
        return self._by_name[name]

    def facts(self) -> list[KbFact]:
        return [f for r in sorted(self.restaurants, key=lambda r: r.name) for f in kb_facts(r)]

    def export(self) -> str:
        return "".join(f.render() + "\n" for f in self.facts())


def api_call_lookup(kb: KnowledgeBase, cuisine: str, location: str, price: str, party: str) -> list[Restaurant]:
    """Restaurants matching all four fields; best rated first, veg before non-veg."""
    return list(kb._index.get((cuisine, location, price, party), ()))


def generate_kb(seed: int, config: KbConfig | None = None) -> tuple[KnowledgeBase, KnowledgeBase]:
    """Build the two KB halves. Every (location, cuisine, price, rating) cell of
    a half yields one veg/non-veg pair sharing party size and speciality."""
    config = config or KbConfig()
    config.validate()
    root = Rng(seed)
    halves = []
    for half_id in ("A", "B"):
        rng = root.child(f"kb/{half_id}")
        cuisines, locations = config.half(half_id)
        restaurants = []
        for location in locations:
            for cuisine in cuisines:
                for price in PRICES:
                    for rating in RATINGS:
                        party = rng.choice(PARTY_SIZES)
                        speciality = rng.choice(config.dishes[cuisine])
                        for index in (1, 2):
                            restaurants.append(Restaurant(location, cuisine, price, rating, index, party, speciality))
        dish_lists = {c: tuple(config.dishes[c]) for c in cuisines}
        halves.append(KnowledgeBase(half_id, tuple(restaurants), dish_lists))
    return halves[0], halves[1]


def score_restaurant(r: Restaurant, p: UserProfile) -> Fraction:
    """rating + 8 if the diet matches + 2.5 if the speciality is the favorite."""
    score = Fraction(r.rating)
    if r.diet_type == p.diet:
        score += 8
    if r.speciality == p.favorite:
        score += Fraction(5, 2)
    return score


def proposal_order(restaurants: Iterable[Restaurant], p: UserProfile) -> list[Restaurant]:
    """Descending score; ties broken by rating, then veg first, then name."""
    return sorted(restaurants, key=lambda r: (-score_restaurant(r, p),) + lookup_order(r))


def sample_profile(rng: Rng, cuisine: str, dish_lists: dict) -> UserProfile:
    dishes = dish_lists.get(cuisine) or ()
    if not dishes:
        raise KbConfigError(f"no dishes configured for cuisine {cuisine!r}")
    return UserProfile(rng.choice(GENDERS), rng.choice(AGES), rng.choice(DIETS), rng.choice(dishes))


def profile_from_line(tokens: Sequence[str]) -> UserProfile:
    if len(tokens) not in (2, 4) or tokens[0] not in GENDERS or tokens[1] not in AGES:
        raise ValueError(f"malformed profile line: {' '.join(tokens)!r}")
    if len(tokens) == 4:
        if tokens[2] not in DIETS:
            raise ValueError(f"unknown diet {tokens[2]!r}")
        return UserProfile(*tokens)
    return UserProfile(tokens[0], tokens[1])


_NAME_FIELDS = ("location", "price", "cuisine", "rating", "index")


def restaurant_from_facts(facts: Iterable[KbFact]) -> Restaurant:
    """Rebuild a restaurant from its fact lines (the name carries the cell)."""
    rel = {}
    subject = None
    for f in facts:
        subject = f.subject
        rel[f.relation] = f.value
    if subject is None:
        raise ValueError("no facts")
    parts = subject.split("_")
    if len(parts) != 6 or parts[0] != "resto" or not parts[4].endswith("stars"):
        raise ValueError(f"unexpected restaurant name {subject!r}")
    return Restaurant(
        location=parts[1],
        cuisine=parts[3],
        price=parts[2],
        rating=int(parts[4][: -len("stars")]),
        index=int(parts[5]),
        party_size=rel["R_number"],
        speciality=rel["R_speciality"],
    )


def group_facts(facts: Iterable[KbFact]) -> dict[str, list[KbFact]]:
    grouped: dict[str, list[KbFact]] = {}
    for f in facts:
        grouped.setdefault(f.subject, []).append(f)
    return grouped


def load_kb(path, half_id: str) -> KnowledgeBase:
    with open(path, encoding="utf-8") as fh:
        facts = [KbFact.parse(line.rstrip("\n")) for line in fh if line.strip()]
    restaurants = [restaurant_from_facts(fs) for fs in group_facts(facts).values()]
    dish_lists: dict[str, set] = {}
    for r in restaurants:
        dish_lists.setdefault(r.cuisine, set()).add(r.speciality)
    return KnowledgeBase(half_id, tuple(restaurants), {c: tuple(sorted(d)) for c, d in dish_lists.items()})
