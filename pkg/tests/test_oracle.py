import pytest

from persona_dialog.corpus import build_candidate_set, generate_split, parse_dialog
from persona_dialog.kb import UserProfile
from persona_dialog.oracle import CorpusInconsistency, DialogState, Oracle, UnknownIntentError, oracle_rank, oracle_step, replay
from persona_dialog.simulator import TASKS

WORKED_PT1 = """1 female elderly
2 hi\tgood day madam how could i assist you today
3 may i have a table\tthank you madam i shall start the reservation now
4 <SILENCE>\tcould you tell me your preference on the type of cuisine
5 i love french food\tcould you tell me where the restaurant should be located
6 madrid please\twould you mind telling me how many guests shall be at your table
7 for four please\twould you mind telling me your price range
8 in a cheap price range please\tthank you madam i shall provide you with options shortly
9 <SILENCE>\tapi_call french madrid four cheap
"""


def test_worked_pt1_dialog_is_reproduced():
    d = parse_dialog(WORKED_PT1)
    for _, predicted, gold in replay(d):
        assert predicted == gold


@pytest.mark.parametrize("task", TASKS)
@pytest.mark.parametrize("split", ["trn", "tst-OOV"])
def test_replay_matches_every_generated_turn(halves, task, split):
    for d in generate_split(task, split, 80, 5, halves):
        for _, predicted, gold in replay(d):
            assert predicted == gold


def test_state_is_immutable_and_threaded():
    p = UserProfile("male", "young")
    s0 = DialogState()
    bot, s1 = oracle_step(s0, p, "hello")
    assert bot == "hey dude what is up"
    assert s0.phase == "start" and s1.phase == "greeted"
    bot, s2 = oracle_step(s1, p, "can you book a table in paris")
    assert s2.field_map() == {"location": "paris"}
    bot, s3 = oracle_step(s2, p, "<SILENCE>")
    assert bot == "what food are you looking for"


def test_unknown_and_out_of_phase_utterances():
    p = UserProfile("male", "young")
    with pytest.raises(UnknownIntentError):
        oracle_step(DialogState(), p, "tell me a joke")
    with pytest.raises(UnknownIntentError):
        oracle_step(DialogState(), p, "no i don't like that")


def test_rank_reports_missing_candidate():
    p = UserProfile("male", "young")
    with pytest.raises(CorpusInconsistency):
        oracle_rank(DialogState(), p, "hi", [], {"something else": 0})
    idx, _ = oracle_rank(DialogState(), p, "hi", [], {"hey dude what is up": 7})
    assert idx == 7


def test_recognizer_rejects_double_field_update():
    with pytest.raises(UnknownIntentError):
        Oracle().recognize("actually i would prefer in paris for two")
