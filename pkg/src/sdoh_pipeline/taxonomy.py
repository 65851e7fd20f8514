"""The 14-class SDoH label taxonomy and its definition registry.

Labels are grouped in three tiers: three tier-1 classes (headline housing and
food codes), four tier-2 classes (housing / transport / financial / material
hardship codes), and seven tier-3 eviction-status classes.  Canonical tokens
are the exact strings annotators must emit and parsers must accept
(``t1_Homelessness``, ``t3_Eviction_pending``, ...).  A distinguished
``Other`` sentinel is a legal annotator *output* but never a gold class.

The default definitions ship in code; :func:`load_taxonomy` reads the same
content from a JSON config file so clinical experts can edit definition text
and few-shot snippets without code changes.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError, InvalidLabelError, MissingDefinitionError


class Tier(enum.Enum):
    TIER1 = "tier1"
    TIER2 = "tier2"
    TIER3_EVICTION = "tier3_eviction"


@dataclass(frozen=True)
class SdohLabel:
    """One taxonomy class. ``canonical_name`` is the exact wire token."""

    canonical_name: str
    tier: Tier | None  # None only for the Other sentinel
    short_name: str

    def __str__(self) -> str:  # render == canonical token
        return self.canonical_name


@dataclass(frozen=True)
class LabelDefinition:
    """Expert definition used verbatim in augmentation prompts."""

    label: SdohLabel
    definition_text: str
    few_shot_snippets: tuple[str, ...] = ()
    icd10: str | None = None


OTHER_TOKEN = "Other"
#: Out-of-band sentinel: a legal annotator output, never a gold class.
OTHER = SdohLabel(OTHER_TOKEN, None, "other / out of scope")


def _label(token: str, tier: Tier, short: str) -> SdohLabel:
    return SdohLabel(token, tier, short)


HOMELESSNESS = _label("t1_Homelessness", Tier.TIER1, "homelessness")
INADEQUATE_HOUSING = _label("t1_InadequateHousing", Tier.TIER1, "inadequate housing")
LACK_OF_ADEQUATE_FOOD = _label("t1_LackOfAdequateFood", Tier.TIER1, "lack of adequate food")
FINANCIAL_INSECURITY = _label("t2_FinancialInsecurity", Tier.TIER2, "financial insecurity")
HOUSING_INSTABILITY = _label("t2_HousingInstability", Tier.TIER2, "housing instability")
MATERIAL_HARDSHIP = _label("t2_MaterialHardship", Tier.TIER2, "material hardship")
TRANSPORTATION_INSECURITY = _label(
    "t2_TransportationInsecurity", Tier.TIER2, "transportation insecurity"
)
EVICTION_ABSENT = _label("t3_Eviction_absent", Tier.TIER3_EVICTION, "eviction absent")
EVICTION_PRESENT_HISTORY = _label(
    "t3_Eviction_present_history", Tier.TIER3_EVICTION, "eviction present (history)"
)
EVICTION_PRESENT_CURRENT = _label(
    "t3_Eviction_present_current", Tier.TIER3_EVICTION, "eviction present (current)"
)
EVICTION_PENDING = _label("t3_Eviction_pending", Tier.TIER3_EVICTION, "eviction pending")
EVICTION_HYPOTHETICAL = _label(
    "t3_Eviction_hypothetical", Tier.TIER3_EVICTION, "eviction hypothetical"
)
EVICTION_MR_HISTORY = _label(
    "t3_Eviction_mr_history", Tier.TIER3_EVICTION, "mutual rescission (history)"
)
EVICTION_MR_CURRENT = _label(
    "t3_Eviction_mr_current", Tier.TIER3_EVICTION, "mutual rescission (current)"
)

#: The 14 gold classes, tier-1 first, then tier-2, then the eviction statuses.
ALL_LABELS: tuple[SdohLabel, ...] = (
    HOMELESSNESS,
    INADEQUATE_HOUSING,
    LACK_OF_ADEQUATE_FOOD,
    FINANCIAL_INSECURITY,
    HOUSING_INSTABILITY,
    MATERIAL_HARDSHIP,
    TRANSPORTATION_INSECURITY,
    EVICTION_ABSENT,
    EVICTION_PRESENT_HISTORY,
    EVICTION_PRESENT_CURRENT,
    EVICTION_PENDING,
    EVICTION_HYPOTHETICAL,
    EVICTION_MR_HISTORY,
    EVICTION_MR_CURRENT,
)

EVICTION_LABELS: tuple[SdohLabel, ...] = tuple(
    lab for lab in ALL_LABELS if lab.tier is Tier.TIER3_EVICTION
)
NON_EVICTION_LABELS: tuple[SdohLabel, ...] = tuple(
    lab for lab in ALL_LABELS if lab.tier is not Tier.TIER3_EVICTION
)

#: Required eviction-status suffix set; config files may not change it.
_EVICTION_STATUSES = {
    "absent",
    "present_history",
    "present_current",
    "pending",
    "hypothetical",
    "mr_history",
    "mr_current",
}

_MR_TEXT = (
    "Mutual rescission is a legal agreement in which both the landlord and the "
    "tenant agree to terminate the lease early, after eviction proceedings have "
    "started but before the eviction process reaches its final stage. The tenant "
    "voluntarily vacates the rental property and the eviction is stopped before "
    "completion; the tenant no longer has access to the property."
)
_CURRENT_TEXT = (
    "\"Current\" means the event happened within the current natural year, with a "
    "recent time reference such as \"this year\", \"last month\", \"a few months "
    "ago\", or \"recently\"."
)
_HISTORY_TEXT = (
    "\"History\" means the event happened in the past with less specificity about "
    "timing: the distant past (\"last year\", \"several years ago\") or no explicit "
    "time reference at all."
)

_DEFAULT_DEFS: dict[str, tuple[str, tuple[str, ...], str]] = {
    # token -> (definition_text, few_shot_snippets, icd10)
    "t1_Homelessness": (
        "An individual or family who lacks a fixed, regular, and adequate "
        "nighttime residence, such as those living in emergency shelters, "
        "transitional housing, or places not meant for habitation.",
        (
            "is homeless and lives in a shelter",
            "found it difficult to secure housing and ended up living in his car",
            "living on the streets",
            "living in a homeless encampment",
            "couch surfing",
        ),
        "Z59.0",
    ),
    "t1_InadequateHousing": (
        "An occupied housing unit that has moderate or severe physical problems, "
        "such as deficiencies in plumbing, heating, electricity, hallways, and "
        "upkeep. Moderate problems include repeated toilet breakdowns, unvented "
        "primary heating equipment, or lack of a complete kitchen; severe problems "
        "include lack of running hot or cold water, lack of a working toilet, and "
        "exposed wiring.",
        (
            "lives in an old apartment building with severe structural issues",
            "live in an apartment that lacks a functioning heating system",
            "unsafe housing situation",
            "unsanitary living conditions",
            "lead and toxic exposures in home",
        ),
        "Z59.1",
    ),
    "t1_LackOfAdequateFood": (
        "Limited or inadequate access to food because of insufficient money and "
        "other resources for food. Food security requires physical and economic "
        "access to sufficient, safe, and nutritious food at all times; food "
        "insecurity is the absence of one or more of these conditions.",
        (
            "frequently goes hungry or eats whatever is available",
            "uses food pantries and soup kitchens for food",
            "does not have stable food sources",
            "lives in a food desert",
        ),
        "Z59.4",
    ),
    "t2_FinancialInsecurity": (
        "The anxiety produced by possible exposure to adverse economic events and "
        "by the anticipated difficulty of recovering from them, such as fear of "
        "unemployment, an expected worsening financial situation, money "
        "mismanagement, or being financially exploited or scammed.",
        (
            "has been having a lot of stress recently due to financial concerns",
            "was very concerned about the financial burden of hospitalization",
            "has experienced several months of financial difficulty due to job loss",
            "lack of stable income",
        ),
        "Z59.86",
    ),
    "t2_HousingInstability": (
        "Having difficulty paying rent, spending more than half of household "
        "income on housing, frequent moves, living in overcrowded conditions, or "
        "doubling up with friends and relatives; unstably housed, housing "
        "insecure, in a temporary housing situation, or at imminent risk of "
        "becoming homeless.",
        (
            "has moved three times",
            "fell behind on his rent payments",
            "temporarily staying with friends",
            "staying in a motel",
            "at risk of losing their housing",
        ),
        "Z59.81",
    ),
    "t2_MaterialHardship": (
        "Difficulty meeting basic needs such as food, housing, or medical care, "
        "common among low-income households.",
        (
            "their electricity was cut off because they couldn't make the payments",
            "cannot afford to buy winter coats or shoes that fit correctly",
            "cannot afford the necessary school supplies for their three children",
        ),
        "Z59.87",
    ),
    "t2_TransportationInsecurity": (
        "Regularly being unable to get from place to place in a safe or timely "
        "manner because of a lack of resources, limiting access to work, school, "
        "medical care, social activities, and more.",
        (
            "lives in a rural area where there are no public transportation options",
            "can't afford the transportation fare and has to walk long distances",
            "does not own a car",
            "does not have bus passes",
        ),
        "Z59.82",
    ),
    "t3_Eviction_absent": (
        "The text clearly states \"never evicted\" or \"no history of eviction\".",
        (
            "denies ever being evicted",
            "no history of eviction; rents the same apartment for ten years",
        ),
        "Z59.89",
    ),
    "t3_Eviction_present_history": (
        "The eviction process has already been fully concluded and the tenant has "
        "been legally removed from the property; all legal proceedings, such as "
        "notices and hearings, have been completed, and the tenant no longer has "
        "access to the property. " + _HISTORY_TEXT,
        (
            "was evicted from his apartment several years ago and has rented rooms since",
            "experienced an eviction in the past; no timeframe documented",
        ),
        "Z59.89",
    ),
    "t3_Eviction_present_current": (
        "The eviction process has already been fully concluded and the tenant has "
        "been legally removed from the property; all legal proceedings, such as "
        "notices and hearings, have been completed, and the tenant no longer has "
        "access to the property. " + _CURRENT_TEXT,
        (
            "was evicted from her rental home last month after a court order",
            "lost his apartment to an eviction a few weeks ago and now stays with family",
        ),
        "Z59.89",
    ),
    "t3_Eviction_pending": (
        "Eviction proceedings have been initiated but are not yet complete. The "
        "tenant is still in the property and there is still an opportunity for "
        "negotiation, remediation, or resolution before a final court decision or "
        "physical removal occurs. Unlike a completed eviction, the tenant has "
        "received a notice but there has been no final court order or physical "
        "removal; the outcome is still undecided.",
        (
            "the tenant received an eviction notice recently, but negotiations with "
            "the landlord to pay overdue rent are still ongoing",
            "the landlord filed for eviction due to nonpayment, but the case is "
            "still pending in court",
            "currently under an eviction notice but working with a housing advocate "
            "to resolve the issue before the court date",
        ),
        "Z59.89",
    ),
    "t3_Eviction_hypothetical": (
        "The eviction process is anticipated or expected to occur but has not yet "
        "been initiated. The landlord has expressed an intention to proceed with "
        "eviction but has not issued any notice; the tenant is still in the "
        "property and the eviction is expected in the near future (\"in the coming "
        "weeks\", \"next month\", \"soon\").",
        (
            "the landlord has given a final warning, and eviction proceedings are "
            "expected to start next month if the rent is not paid",
            "has been told they must vacate the premises in the coming weeks due to "
            "repeated lease violations",
            "eviction is planned for the near future, as the landlord intends to "
            "reclaim the property due to nonpayment",
        ),
        "Z59.89",
    ),
    "t3_Eviction_mr_history": (
        _MR_TEXT + " " + _HISTORY_TEXT,
        (
            "agreed with the landlord years ago to end the lease early after an "
            "eviction filing and moved out voluntarily",
        ),
        "Z59.89",
    ),
    "t3_Eviction_mr_current": (
        _MR_TEXT + " " + _CURRENT_TEXT,
        (
            "signed a mutual rescission agreement with her landlord a few months "
            "ago and vacated the unit before the eviction was completed",
        ),
        "Z59.89",
    ),
}


class Taxonomy:
    """Validated label set plus definition registry.

    Construction fails (``ConfigError`` / ``MissingDefinitionError``) unless
    exactly the 14 canonical classes are present, each with a non-empty
    definition.
    """

    def __init__(self, definitions: Iterable[LabelDefinition]):
        defs = {d.label.canonical_name: d for d in definitions}
        self._validate(defs)
        self._definitions: dict[str, LabelDefinition] = defs
        self._by_name: dict[str, SdohLabel] = {
            lab.canonical_name: lab for lab in ALL_LABELS
        }
        self._by_name[OTHER_TOKEN] = OTHER

    @staticmethod
    def _validate(defs: Mapping[str, LabelDefinition]) -> None:
        expected = {lab.canonical_name for lab in ALL_LABELS}
        missing = expected - set(defs)
        if missing:
            raise MissingDefinitionError(
                f"definitions missing for: {', '.join(sorted(missing))}"
            )
        extra = set(defs) - expected
        if extra:
            raise ConfigError(f"unknown label tokens: {', '.join(sorted(extra))}")
        empty = [name for name, d in defs.items() if not d.definition_text.strip()]
        if empty:
            raise MissingDefinitionError(
                f"empty definition text for: {', '.join(sorted(empty))}"
            )
        tiers = {t: 0 for t in Tier}
        for name in expected:
            tiers[defs[name].label.tier] += 1
        if (tiers[Tier.TIER1], tiers[Tier.TIER2], tiers[Tier.TIER3_EVICTION]) != (3, 4, 7):
            raise ConfigError(
                "tier shape must be 3 tier-1 / 4 tier-2 / 7 tier-3 labels"
            )
        statuses = {
            name.removeprefix("t3_Eviction_")
            for name in expected
            if defs[name].label.tier is Tier.TIER3_EVICTION
        }
        if statuses != _EVICTION_STATUSES:
            raise ConfigError(f"eviction statuses must be exactly {_EVICTION_STATUSES}")

    # -- operations -----------------------------------------------------------

    @property
    def labels(self) -> tuple[SdohLabel, ...]:
        return ALL_LABELS

    def parse_label(self, text: str) -> SdohLabel:
        """Exact, case-sensitive token lookup; ``Other`` parses to the sentinel."""
        try:
            return self._by_name[text]
        except KeyError:
            raise InvalidLabelError(f"not a canonical label token: {text!r}") from None

    def definition_of(self, label: SdohLabel) -> LabelDefinition:
        try:
            return self._definitions[label.canonical_name]
        except KeyError:
            raise MissingDefinitionError(
                f"no definition registered for {label.canonical_name!r}"
            ) from None


def is_eviction_related(label: SdohLabel) -> bool:
    """True iff the label is one of the seven tier-3 eviction statuses."""
    return label.tier is Tier.TIER3_EVICTION


def default_taxonomy() -> Taxonomy:
    defs = [
        LabelDefinition(
            label=lab,
            definition_text=_DEFAULT_DEFS[lab.canonical_name][0],
            few_shot_snippets=_DEFAULT_DEFS[lab.canonical_name][1],
            icd10=_DEFAULT_DEFS[lab.canonical_name][2],
        )
        for lab in ALL_LABELS
    ]
    return Taxonomy(defs)


DEFAULT_TAXONOMY = default_taxonomy()


def parse_label(text: str) -> SdohLabel:
    """Module-level convenience bound to the default taxonomy."""
    return DEFAULT_TAXONOMY.parse_label(text)


def definition_of(label: SdohLabel) -> LabelDefinition:
    """Module-level convenience bound to the default taxonomy."""
    return DEFAULT_TAXONOMY.definition_of(label)


_TIER_NAMES = {t.value: t for t in Tier}


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Load a taxonomy from a JSON config file.

    Format: ``{"labels": [{"canonical_name", "tier", "short_name",
    "definition_text", "few_shot_snippets", "icd10"?}, ...]}``.  The canonical
    token set and tier shape must match the built-in taxonomy; only the prose
    (definitions, snippets, short names) is editable.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = data.get("labels")
    if not isinstance(entries, list):
        raise ConfigError(f"{path}: expected a top-level 'labels' list")
    defs = []
    for entry in entries:
        try:
            tier = _TIER_NAMES[entry["tier"]]
            label = SdohLabel(entry["canonical_name"], tier, entry.get("short_name", ""))
            defs.append(
                LabelDefinition(
                    label=label,
                    definition_text=entry["definition_text"],
                    few_shot_snippets=tuple(entry.get("few_shot_snippets", ())),
                    icd10=entry.get("icd10"),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"{path}: label entry missing field {exc}") from None
    return Taxonomy(defs)


def dump_taxonomy(taxonomy: Taxonomy) -> dict:
    """Inverse of :func:`load_taxonomy`, for writing editable config files."""
    return {
        "labels": [
            {
                "canonical_name": lab.canonical_name,
                "tier": lab.tier.value,
                "short_name": lab.short_name,
                "definition_text": taxonomy.definition_of(lab).definition_text,
                "few_shot_snippets": list(taxonomy.definition_of(lab).few_shot_snippets),
                "icd10": taxonomy.definition_of(lab).icd10,
            }
            for lab in taxonomy.labels
        ]
    }
