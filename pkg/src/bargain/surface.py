"""Surface layer: deterministic act-to-text templates and the rule-based
free-text offer parser.

The English item lexicon lives in ``lexicon.json`` next to this module.
Grammar rules (documented in docs/corpus_format.md):

* a bare item mention without a numeral means all of that item;
* "you ..." phrases give items away, the speaker keeps the complement;
* "the rest" assigns every not-yet-mentioned issue to the current side;
* when an utterance names items for the speaker, unmentioned issues go to
  the partner; when it only gives items away, they stay with the speaker.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .env import ActKind, DialogueAct, Division, Scenario, Speaker, N_ISSUES

_LEX = json.loads(resources.files("bargain").joinpath("lexicon.json").read_text())

_ITEM_BY_WORD = {w: entry["issue"] for entry in _LEX["items"] for w in entry["words"]}
_SINGULAR = [e["singular"] for e in sorted(_LEX["items"], key=lambda e: e["issue"])]
_NUMERALS = dict(_LEX["numerals"])
_ALL = set(_LEX["all_words"])
_EVERYTHING = set(_LEX["everything_words"])
_REST = set(_LEX["rest_words"])
_OWN = set(_LEX["own_markers"])
_PARTNER = set(_LEX["partner_markers"])
_ACCEPT_STRONG = set(_LEX["accept_strong"])
_ACCEPT_FILLER = set(_LEX["accept_filler"]) | _ACCEPT_STRONG
_SELECT = set(_LEX["select_tokens"])
_WALKAWAY = set(_LEX["walkaway_tokens"])

_PUNCT_RE = re.compile(r"[.,!?;:\"']")
# fractional-split phrasings have no exact-count reading in this grammar
_FRACTION_WORDS = {"split", "share", "half", "evenly", "divide"}


class ParseStatus(str, Enum):
    PARSED = "parsed"
    AMBIGUOUS = "ambiguous"
    FAILED = "failed"


@dataclass(frozen=True)
class OfferParse:
    status: ParseStatus
    act: DialogueAct | None = None
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.status is ParseStatus.PARSED


def tokenize(text: str) -> list[str]:
    return [t for t in _PUNCT_RE.sub(" ", text.lower()).split() if t]


def _plural(issue: int, n: int) -> str:
    word = _SINGULAR[issue]
    return word if n == 1 else word + "s"


def realize_act(act: DialogueAct, scenario: Scenario) -> str:
    """Deterministic text for an act; always round-trips through the parser."""
    if act.kind is ActKind.ACCEPT:
        return "deal"
    if act.kind is ActKind.SELECT:
        return "<selection>"
    if act.kind is ActKind.WALKAWAY:
        return "<walkaway>"
    take = act.proposal.take
    counts = scenario.counts
    if all(t == 0 for t in take):
        return "you can have everything"
    if take == counts:
        return "i want everything"
    parts = [f"{t} {_plural(k, t)}" for k, t in enumerate(take) if t > 0]
    return "i want " + " and ".join(parts)


def _parse_accept(tokens: list[str]) -> bool:
    if not tokens:
        return False
    if not any(t in _ACCEPT_STRONG for t in tokens):
        return False
    return all(t in _ACCEPT_FILLER for t in tokens)


def _scan_mentions(tokens: list[str]):
    """One pass over tokens, yielding (direction, issue|'rest'|'everything', qty).

    direction is 'own' or 'partner'; qty is an int or 'all'.
    """
    mentions = []
    direction = "own"
    saw_direction = False
    pending_qty: int | str | None = None
    for tok in tokens:
        if tok in _OWN:
            direction, saw_direction = "own", True
        elif tok in _PARTNER:
            direction, saw_direction = "partner", True
        elif tok in _NUMERALS:
            pending_qty = _NUMERALS[tok]
        elif tok.isdigit():
            pending_qty = int(tok)
        elif tok in _ALL:
            pending_qty = "all"
        elif tok in _EVERYTHING:
            mentions.append((direction, "everything", "all"))
            pending_qty = None
        elif tok in _REST:
            mentions.append((direction, "rest", "all"))
            pending_qty = None
        elif tok in _ITEM_BY_WORD:
            qty = pending_qty if pending_qty is not None else "all"
            mentions.append((direction, _ITEM_BY_WORD[tok], qty))
            pending_qty = None
    return mentions, saw_direction


def _resolve_proposal(mentions, counts) -> tuple[tuple[int, ...] | None, str]:
    """Turn scanned mentions into the speaker's own take, or an error note."""
    own: dict[int, int] = {}
    partner: dict[int, int] = {}
    rest_dir: str | None = None
    for direction, target, qty in mentions:
        if target in ("rest", "everything"):
            if rest_dir is not None and rest_dir != direction:
                return None, "conflicting remainder assignments"
            rest_dir = direction
            continue
        issue = target
        n = counts[issue] if qty == "all" else int(qty)
        if n > counts[issue]:
            return None, f"asks for {n} of issue {issue} with only {counts[issue]} available"
        bucket = own if direction == "own" else partner
        if issue in bucket and bucket[issue] != n:
            return None, f"issue {issue} mentioned twice with different quantities"
        bucket[issue] = n
    for issue in set(own) & set(partner):
        if own[issue] + partner[issue] != counts[issue]:
            return None, f"issue {issue} claimed by both sides inconsistently"
    take = [0] * N_ISSUES
    for k in range(N_ISSUES):
        if k in own:
            take[k] = own[k]
        elif k in partner:
            take[k] = counts[k] - partner[k]
        elif rest_dir == "own":
            take[k] = counts[k]
        elif rest_dir == "partner":
            take[k] = 0
        elif not own:
            take[k] = counts[k]  # pure give-away: speaker keeps the rest
        else:
            take[k] = 0
    return tuple(take), ""


def parse_utterance(text: str, scenario: Scenario, speaker: Speaker = Speaker.A) -> OfferParse:
    """Map one utterance to a dialogue act, or report why it cannot be."""
    tokens = tokenize(text)
    if not tokens:
        return OfferParse(ParseStatus.FAILED, note="empty utterance")
    raw = text.strip().lower()
    if raw in _SELECT or (len(tokens) == 1 and tokens[0] in _SELECT):
        return OfferParse(ParseStatus.PARSED, DialogueAct(ActKind.SELECT, speaker))
    if raw in _WALKAWAY or (len(tokens) == 1 and tokens[0] in _WALKAWAY):
        return OfferParse(ParseStatus.PARSED, DialogueAct(ActKind.WALKAWAY, speaker))
    mentions, _ = _scan_mentions(tokens)
    if mentions:
        if any(t in _FRACTION_WORDS for t in tokens):
            return OfferParse(
                ParseStatus.AMBIGUOUS,
                note="splitting words are ambiguous here; name exact item counts",
            )
        take, note = _resolve_proposal(mentions, scenario.counts)
        if take is None:
            status = ParseStatus.FAILED if "available" in note else ParseStatus.AMBIGUOUS
            return OfferParse(status, note=note)
        return OfferParse(
            ParseStatus.PARSED,
            DialogueAct(ActKind.PROPOSE, speaker, Division(take)),
        )
    if _parse_accept(tokens):
        return OfferParse(ParseStatus.PARSED, DialogueAct(ActKind.ACCEPT, speaker))
    return OfferParse(ParseStatus.FAILED, note="no offer content recognized")
