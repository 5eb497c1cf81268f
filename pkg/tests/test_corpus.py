import numpy as np
import pytest

from bargain.corpus import (
    corpus_stats,
    extract_acts,
    extraction_coverage,
    merge_perspectives,
    parse_dataset,
    parse_line,
    record_to_line,
    training_examples,
)
from bargain.env import ActKind, Speaker
from bargain.errors import DataError
from bargain.synth import generate_corpus, generate_dialogue, write_corpus_files
from bargain.env import sample_scenario

GOOD_LINE = (
    "<input> 2 1 1 2 3 2 </input>"
    " <dialogue> YOU: i want 1 book and 2 balls <eos> THEM: deal <eos> YOU: <selection> <eos> </dialogue>"
    " <output> item0=1 item1=0 item2=2 item0=1 item1=1 item2=1 </output>"
    " <partner_input> 2 0 1 7 3 1 </partner_input>"
)
NO_AGREEMENT_LINE = (
    "<input> 1 2 2 3 2 1 </input>"
    " <dialogue> YOU: i want everything <eos> THEM: i want everything <eos> </dialogue>"
    " <output> <no_agreement> <no_agreement> <no_agreement> <no_agreement> <no_agreement> <no_agreement> </output>"
    " <partner_input> 1 4 2 2 2 1 </partner_input>"
)


class TestParseLine:
    def test_good_line(self):
        rec = parse_line(GOOD_LINE)
        assert rec.scenario.counts == (2, 1, 3)
        assert rec.scenario.values_a == (1, 2, 2)
        assert rec.scenario.values_b == (0, 7, 1)
        assert [t for t, _ in rec.turns] == ["YOU", "THEM", "YOU"]
        assert rec.agreed
        you, them = rec.output
        assert you.take == (1, 0, 2) and them.take == (1, 1, 1)

    def test_no_agreement_markers(self):
        rec = parse_line(NO_AGREEMENT_LINE)
        assert not rec.agreed
        assert rec.output == "<no_agreement>"

    def test_round_trip_is_lossless(self):
        for line in (GOOD_LINE, NO_AGREEMENT_LINE):
            rec = parse_line(line)
            again = parse_line(record_to_line(rec))
            assert again.scenario == rec.scenario
            assert again.turns == rec.turns
            assert again.output == rec.output

    @pytest.mark.parametrize(
        "mutation,what",
        [
            (lambda l: l.replace("2 1 1 2 3 2", "2 1 1 2 3"), "input"),
            (lambda l: l.replace("YOU: i want", "ALICE: i want"), "tag"),
            (lambda l: l.replace("item0=1 item1=0", "item1=0 item0=1"), "output"),
            (lambda l: l.replace("<partner_input> 2 0", "<partner_input> 3 0"), "counts"),
            (lambda l: l.replace("THEM: deal <eos> YOU:", "YOU: deal <eos> YOU:"), "alternate"),
        ],
    )
    def test_malformed_lines_raise(self, mutation, what):
        with pytest.raises(ValueError):
            parse_line(mutation(GOOD_LINE))


class TestParseDataset:
    def test_empty_stream(self):
        records, report = parse_dataset([])
        assert records == [] and report.errors == []

    def test_errors_cite_line_numbers(self):
        bad = GOOD_LINE.replace("2 1 1 2 3 2", "2 1 1 2 3")
        records, report = parse_dataset([GOOD_LINE, bad, NO_AGREEMENT_LINE])
        assert len(records) == 2
        assert [no for no, _ in report.errors] == [2]
        assert "6 integers" in report.errors[0][1]

    def test_blank_lines_skipped(self):
        records, report = parse_dataset([GOOD_LINE, "", "   "])
        assert len(records) == 1 and not report.errors


class TestMergeAndStats:
    def test_perspective_pair_collapses(self):
        rec = generate_dialogue(sample_scenario(np.random.default_rng(0)), np.random.default_rng(1))
        from bargain.synth import _flip_record

        merged = merge_perspectives([rec, _flip_record(rec)])
        assert len(merged) == 1

    def test_single_agreed_dialogue(self):
        st = corpus_stats([parse_line(GOOD_LINE)])
        assert st.dialogue_count == 1
        assert st.agreement_rate == 1.0
        assert st.avg_turns == 3
        assert st.unique_scenarios == 1

    def test_mixed(self):
        st = corpus_stats([parse_line(GOOD_LINE), parse_line(NO_AGREEMENT_LINE)])
        assert st.dialogue_count == 2
        assert st.agreement_rate == 0.5

    def test_empty_raises(self):
        with pytest.raises(DataError):
            corpus_stats([])


class TestExtractActs:
    def test_table1_dialogue(self):
        rec = parse_line(GOOD_LINE)
        acts, failures = extract_acts(rec)
        assert not failures
        assert [a.kind for a in acts] == [ActKind.PROPOSE, ActKind.ACCEPT, ActKind.SELECT]
        assert acts[0].proposal.take == (1, 0, 2)
        assert [a.speaker for a in acts] == [Speaker.A, Speaker.B, Speaker.A]

    def test_chitchat_flagged_not_guessed(self):
        line = GOOD_LINE.replace("YOU: i want 1 book and 2 balls", "YOU: hello there")
        acts, failures = extract_acts(parse_line(line))
        assert len(acts) == 2
        assert failures and failures[0][0] == 0

    def test_never_exceeds_counts(self):
        records = generate_corpus(120, seed=3)
        for rec in records:
            acts, _ = extract_acts(rec)
            for act in acts:
                if act.proposal is not None:
                    assert act.proposal.fits(rec.scenario.counts)


class TestTrainingExamples:
    def test_fully_extracted_supervises_acts(self):
        exs = training_examples([parse_line(GOOD_LINE)])
        assert len(exs) == 1
        assert exs[0].fully_extracted
        assert exs[0].output_target.take == (1, 0, 2)

    def test_partial_contributes_output_only(self):
        line = GOOD_LINE.replace("THEM: deal", "THEM: hmm let me think")
        exs = training_examples([parse_line(line)])
        assert len(exs) == 1
        assert not exs[0].fully_extracted
        assert exs[0].output_target is not None

    def test_partial_without_agreement_dropped(self):
        line = NO_AGREEMENT_LINE.replace("YOU: i want everything", "YOU: hello hello")
        assert training_examples([parse_line(line)]) == []


class TestSyntheticCorpus:
    def test_determinism(self):
        a = generate_corpus(40, seed=9)
        b = generate_corpus(40, seed=9)
        assert [record_to_line(r) for r in a] == [record_to_line(r) for r in b]

    def test_statistics_near_published_values(self):
        st = corpus_stats(generate_corpus(2000, seed=20230601))
        assert abs(st.agreement_rate - 0.80) < 0.05
        assert abs(st.avg_turns - 6.6) < 0.5
        assert abs(st.avg_words_per_turn - 7.6) < 0.5

    def test_both_perspectives_emitted(self):
        records = generate_corpus(30, seed=1)
        assert len(records) == 60
        assert len(merge_perspectives(records)) == 30

    def test_lines_parse_back(self):
        # the line format carries no scenario id, so compare content only
        for rec in generate_corpus(40, seed=2):
            again = parse_line(record_to_line(rec))
            assert again.scenario.counts == rec.scenario.counts
            assert again.scenario.values_a == rec.scenario.values_a
            assert again.scenario.values_b == rec.scenario.values_b
            assert again.turns == rec.turns
            assert again.output == rec.output

    def test_write_corpus_files(self, tmp_path):
        records = generate_corpus(40, seed=2)
        sizes = write_corpus_files(records, tmp_path, seed=0)
        assert sum(sizes.values()) == 80
        got, report = parse_dataset(open(tmp_path / "train.txt"))
        assert not report.errors

    def test_coverage_report(self):
        cov = extraction_coverage(generate_corpus(150, seed=4))
        assert 0.85 < cov["turn_coverage"] <= 1.0
        assert 0.5 < cov["full_dialogue_fraction"] <= 1.0
