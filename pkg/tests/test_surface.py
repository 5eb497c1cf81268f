import numpy as np
import pytest

from bargain.env import (
    ActKind,
    DialogueAct,
    Division,
    Scenario,
    Speaker,
    all_divisions,
    sample_scenario,
)
from bargain.surface import OfferParse, ParseStatus, parse_utterance, realize_act

TABLE1 = Scenario(counts=(2, 1, 3), values_a=(1, 2, 2), values_b=(0, 7, 1))
TABLE4 = Scenario(counts=(1, 3, 1), values_a=(2, 1, 5), values_b=(10, 0, 0))


def takes(parse: OfferParse):
    assert parse.status is ParseStatus.PARSED, parse.note
    return parse.act.proposal.take


class TestParseUtterance:
    def test_own_demand_with_bare_items(self):
        assert takes(parse_utterance("i will take the balls and hat", TABLE1)) == (0, 1, 3)

    def test_giveaway_keeps_complement(self):
        assert takes(parse_utterance("you can have the balls and one book", TABLE1)) == (1, 1, 0)

    def test_mixed_clause_with_rest(self):
        text = "how about i get the ball and two hats and you get the rest ?"
        assert takes(parse_utterance(text, TABLE4)) == (0, 2, 1)

    def test_numerals_and_digits(self):
        assert takes(parse_utterance("i want 1 book and 2 balls", TABLE1)) == (1, 0, 2)
        assert takes(parse_utterance("i want one book and two balls", TABLE1)) == (1, 0, 2)

    def test_everything_phrases(self):
        assert takes(parse_utterance("i want everything", TABLE1)) == (2, 1, 3)
        assert takes(parse_utterance("you can have everything", TABLE1)) == (0, 0, 0)

    def test_accept_markers(self):
        for text in ("deal", "ok", "sure", "ok deal", "i am ok with that", "agreed"):
            parse = parse_utterance(text, TABLE1)
            assert parse.ok and parse.act.kind is ActKind.ACCEPT, text

    def test_negated_agreement_not_accept(self):
        for text in ("no deal", "i can not make that deal", "sorry no"):
            assert not parse_utterance(text, TABLE1).ok, text

    def test_selection_tokens(self):
        for text in ("<selection>", "<dealselection>"):
            parse = parse_utterance(text, TABLE1)
            assert parse.ok and parse.act.kind is ActKind.SELECT

    def test_walkaway_token(self):
        parse = parse_utterance("<walkaway>", TABLE1)
        assert parse.ok and parse.act.kind is ActKind.WALKAWAY

    def test_infeasible_quantity_fails(self):
        parse = parse_utterance("I want 9 hats", TABLE1)
        assert parse.status is ParseStatus.FAILED
        assert "available" in parse.note

    def test_chitchat_fails(self):
        parse = parse_utterance("hello there", TABLE1)
        assert parse.status is ParseStatus.FAILED

    def test_split_is_ambiguous(self):
        parse = parse_utterance("you can have the ball and let's split the books", TABLE4)
        assert parse.status is ParseStatus.AMBIGUOUS

    def test_speaker_attached(self):
        parse = parse_utterance("deal", TABLE1, Speaker.B)
        assert parse.act.speaker is Speaker.B


class TestRealizeAct:
    def test_propose_template(self):
        act = DialogueAct(ActKind.PROPOSE, Speaker.A, Division((1, 0, 2)))
        assert realize_act(act, TABLE1) == "i want 1 book and 2 balls"

    def test_accept_is_deal(self):
        assert realize_act(DialogueAct(ActKind.ACCEPT, Speaker.A), TABLE1) == "deal"

    def test_select_marker(self):
        assert realize_act(DialogueAct(ActKind.SELECT, Speaker.B), TABLE1) == "<selection>"

    def test_zero_take(self):
        act = DialogueAct(ActKind.PROPOSE, Speaker.A, Division((0, 0, 0)))
        assert realize_act(act, TABLE1) == "you can have everything"


def feasible_acts(scenario):
    yield DialogueAct(ActKind.ACCEPT, Speaker.A)
    yield DialogueAct(ActKind.SELECT, Speaker.A)
    yield DialogueAct(ActKind.WALKAWAY, Speaker.A)
    for div in all_divisions(scenario.counts):
        yield DialogueAct(ActKind.PROPOSE, Speaker.A, div)


class TestRoundTrip:
    @pytest.mark.parametrize("scenario", [TABLE1, TABLE4])
    def test_exhaustive_fixed_scenarios(self, scenario):
        for act in feasible_acts(scenario):
            back = parse_utterance(realize_act(act, scenario), scenario)
            assert back.ok and back.act == act, realize_act(act, scenario)

    def test_random_scenarios(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            scenario = sample_scenario(rng)
            for act in feasible_acts(scenario):
                back = parse_utterance(realize_act(act, scenario), scenario)
                assert back.ok and back.act == act
