"""Corpus ingestion for the line-oriented negotiation dialogue format.

One dialogue per line, seen from one participant's perspective:

    <input> c0 v0 c1 v1 c2 v2 </input>
    <dialogue> YOU: tokens <eos> THEM: tokens <eos> ... </dialogue>
    <output> item0=i item1=j item2=k item0=i' item1=j' item2=k' </output>
    <partner_input> c0 w0 c1 w1 c2 w2 </partner_input>

The input block interleaves count/value per issue; the first output triple
is the YOU side's claimed division, the second the partner's. Dialogues
without agreement carry marker tokens (<no_agreement> or <disconnect>)
in the output block. Published files contain each dialogue twice, once per
perspective; ``merge_perspectives`` collapses those pairs.

See docs/corpus_format.md for the full frozen grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .env import DialogueAct, Division, Scenario, Speaker, N_ISSUES
from .errors import DataError
from .surface import ParseStatus, parse_utterance

YOU, THEM = "YOU", "THEM"
NO_AGREEMENT = "<no_agreement>"
DISCONNECT = "<disconnect>"

_BLOCK_RE = re.compile(
    r"<input>(?P<input>.*?)</input>\s*"
    r"<dialogue>(?P<dialogue>.*?)</dialogue>\s*"
    r"<output>(?P<output>.*?)</output>\s*"
    r"<partner_input>(?P<partner>.*?)</partner_input>",
    re.S,
)
_ITEM_TOKEN_RE = re.compile(r"^item([0-2])=(\d+)$")


@dataclass(frozen=True)
class CorpusRecord:
    scenario: Scenario  # values_a = the YOU side, values_b = the partner
    turns: tuple[tuple[str, tuple[str, ...]], ...]  # (speaker tag, tokens)
    output: tuple[Division, Division] | str  # divisions (you, them) or a marker
    raw_line: str = ""
    line_no: int = 0

    @property
    def agreed(self) -> bool:
        return not isinstance(self.output, str)


@dataclass
class ParseReport:
    n_lines: int = 0
    n_records: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[tuple[int, str]] = field(default_factory=list)


@dataclass(frozen=True)
class CorpusStats:
    dialogue_count: int
    unique_scenarios: int
    agreement_rate: float
    avg_turns: float
    avg_words_per_turn: float


def _parse_int_block(text: str, what: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    parts = text.split()
    if len(parts) != 2 * N_ISSUES:
        raise ValueError(f"{what} block needs {2 * N_ISSUES} integers, got {len(parts)}")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise ValueError(f"{what} block has a non-integer token") from None
    return tuple(nums[0::2]), tuple(nums[1::2])


def _parse_output_block(text: str) -> tuple[Division, Division] | str:
    parts = text.split()
    if not parts:
        raise ValueError("empty output block")
    if parts[0] in (NO_AGREEMENT, DISCONNECT):
        if any(p != parts[0] for p in parts):
            raise ValueError("mixed output marker tokens")
        return parts[0]
    if len(parts) != 2 * N_ISSUES:
        raise ValueError(f"output block needs {2 * N_ISSUES} item tokens, got {len(parts)}")
    takes = []
    for i, p in enumerate(parts):
        m = _ITEM_TOKEN_RE.match(p)
        if not m or int(m.group(1)) != i % N_ISSUES:
            raise ValueError(f"bad output token {p!r} at position {i}")
        takes.append(int(m.group(2)))
    return Division(tuple(takes[:N_ISSUES])), Division(tuple(takes[N_ISSUES:]))


def _parse_dialogue_block(text: str) -> tuple[tuple[str, tuple[str, ...]], ...]:
    turns = []
    for segment in text.split("<eos>"):
        segment = segment.strip()
        if not segment:
            continue
        tag, _, rest = segment.partition(":")
        tag = tag.strip()
        if tag not in (YOU, THEM):
            raise ValueError(f"turn without a YOU:/THEM: tag: {segment[:40]!r}")
        turns.append((tag, tuple(rest.split())))
    if not turns:
        raise ValueError("dialogue block has no turns")
    for (a, _), (b, _) in zip(turns, turns[1:]):
        if a == b:
            raise ValueError("speaker tags do not alternate")
    return tuple(turns)


def parse_line(line: str, line_no: int = 0) -> CorpusRecord:
    m = _BLOCK_RE.search(line)
    if not m:
        raise ValueError("line does not match the <input>/<dialogue>/<output>/<partner_input> layout")
    counts, values_you = _parse_int_block(m.group("input"), "input")
    partner_counts, values_them = _parse_int_block(m.group("partner"), "partner_input")
    if counts != partner_counts:
        raise ValueError(f"partner_input counts {partner_counts} differ from input counts {counts}")
    turns = _parse_dialogue_block(m.group("dialogue"))
    output = _parse_output_block(m.group("output"))
    scenario = Scenario(counts=counts, values_a=values_you, values_b=values_them)
    if not isinstance(output, str):
        for div in output:
            if not div.fits(counts):
                raise ValueError(f"output division {div.take} exceeds counts {counts}")
    return CorpusRecord(
        scenario=scenario, turns=turns, output=output, raw_line=line.rstrip("\n"), line_no=line_no
    )


def record_to_line(rec: CorpusRecord) -> str:
    """Serialize back to the corpus line format (lossless for parsed lines)."""
    s = rec.scenario

    def block(values):
        return " ".join(f"{c} {v}" for c, v in zip(s.counts, values))

    dialogue = " ".join(f"{tag}: {' '.join(toks)} <eos>" for tag, toks in rec.turns)
    if isinstance(rec.output, str):
        output = " ".join([rec.output] * 2 * N_ISSUES)
    else:
        you, them = rec.output
        output = " ".join(
            f"item{k}={n}" for k, n in list(enumerate(you.take)) + list(enumerate(them.take))
        )
    return (
        f"<input> {block(s.values_a)} </input>"
        f" <dialogue> {dialogue} </dialogue>"
        f" <output> {output} </output>"
        f" <partner_input> {block(s.values_b)} </partner_input>"
    )


def parse_dataset(lines, report: ParseReport | None = None) -> tuple[list[CorpusRecord], ParseReport]:
    """Parse an iterable of corpus lines; malformed lines are reported, never dropped silently."""
    report = report or ParseReport()
    records: list[CorpusRecord] = []
    for i, line in enumerate(lines, start=1):
        report.n_lines += 1
        if not line.strip():
            continue
        try:
            rec = parse_line(line, line_no=i)
        except ValueError as e:
            report.errors.append((i, str(e)))
            continue
        violations = _scenario_warnings(rec)
        for v in violations:
            report.warnings.append((i, v))
        records.append(rec)
        report.n_records += 1
    return records, report


def _scenario_warnings(rec: CorpusRecord) -> list[str]:
    from .env import validate_scenario

    return validate_scenario(rec.scenario)


def _perspective_key(rec: CorpusRecord):
    """Canonical key identical for the two perspective copies of one dialogue."""
    s = rec.scenario
    flipped_turns = tuple((THEM if t == YOU else YOU, toks) for t, toks in rec.turns)
    if isinstance(rec.output, str):
        out, flipped_out = rec.output, rec.output
    else:
        out = (rec.output[0].take, rec.output[1].take)
        flipped_out = (rec.output[1].take, rec.output[0].take)
    this = (s.counts, s.values_a, s.values_b, rec.turns, out)
    other = (s.counts, s.values_b, s.values_a, flipped_turns, flipped_out)
    return min(this, other)


def merge_perspectives(records: list[CorpusRecord]) -> list[CorpusRecord]:
    """One record per dialogue: collapse perspective-swapped duplicates.

    Published files carry every dialogue exactly twice (once per side), so a
    content group of 2k records is k distinct dialogues; coincidentally
    identical conversations stay counted.
    """
    groups: dict = {}
    order: list = []
    for rec in records:
        key = _perspective_key(rec)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec)
    merged: list[CorpusRecord] = []
    for key in order:
        group = groups[key]
        merged.extend(group[: (len(group) + 1) // 2])
    return merged


def _scenario_key(s: Scenario):
    pair = tuple(sorted([s.values_a, s.values_b]))
    return (s.counts, pair)


def corpus_stats(records: list[CorpusRecord]) -> CorpusStats:
    """Published-statistics view over unique dialogues."""
    if not records:
        raise DataError("cannot compute statistics over an empty corpus")
    dialogues = merge_perspectives(records)
    agreed = sum(1 for r in dialogues if r.agreed)
    total_turns = sum(len(r.turns) for r in dialogues)
    total_words = sum(len(toks) for r in dialogues for _, toks in r.turns)
    return CorpusStats(
        dialogue_count=len(dialogues),
        unique_scenarios=len({_scenario_key(r.scenario) for r in dialogues}),
        agreement_rate=agreed / len(dialogues),
        avg_turns=total_turns / len(dialogues),
        avg_words_per_turn=total_words / total_turns,
    )


def extract_acts(rec: CorpusRecord) -> tuple[list[DialogueAct], list[tuple[int, str]]]:
    """Rule-based mapping from turns to acts; unmatched turns are flagged, never guessed.

    The YOU side maps to Speaker.A. A <selection> turn yields SELECT; offers
    and agreement markers go through the shared utterance grammar.
    """
    acts: list[DialogueAct] = []
    failures: list[tuple[int, str]] = []
    for i, (tag, tokens) in enumerate(rec.turns):
        speaker = Speaker.A if tag == YOU else Speaker.B
        parsed = parse_utterance(" ".join(tokens), rec.scenario, speaker)
        if parsed.status is ParseStatus.PARSED:
            acts.append(parsed.act)
        else:
            failures.append((i, parsed.note or parsed.status.value))
    return acts, failures


@dataclass(frozen=True)
class TrainingExample:
    """Imitation target for one dialogue seen from the YOU side (Speaker.A)."""

    scenario: Scenario
    acts: tuple[DialogueAct, ...]
    output_target: Division | None
    fully_extracted: bool


def training_examples(records: list[CorpusRecord]) -> list[TrainingExample]:
    """Imitation data per the extraction policy.

    Fully extracted dialogues supervise next-act prediction; agreed
    dialogues additionally supervise the output deal, conditioned on
    whatever act subsequence extracted cleanly.
    """
    examples: list[TrainingExample] = []
    for rec in records:
        acts, failures = extract_acts(rec)
        full = not failures
        output = rec.output[0] if rec.agreed else None
        if not full and output is None:
            continue  # nothing to supervise
        if not acts and output is None:
            continue
        examples.append(
            TrainingExample(
                scenario=rec.scenario,
                acts=tuple(acts),
                output_target=output,
                fully_extracted=full,
            )
        )
    return examples


def extraction_coverage(records: list[CorpusRecord]) -> dict:
    """Fraction of turns mapped to acts, plus per-dialogue full-extraction rate."""
    turns = 0
    mapped = 0
    full = 0
    for rec in records:
        acts, failures = extract_acts(rec)
        turns += len(rec.turns)
        mapped += len(acts)
        full += not failures
    return {
        "turn_coverage": mapped / turns if turns else 0.0,
        "full_dialogue_fraction": full / len(records) if records else 0.0,
        "n_records": len(records),
    }
