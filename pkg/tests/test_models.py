import numpy as np
import pytest

from persona_dialog.corpus import Vocabulary, build_vocabulary, generate_split, parse_dialog
from persona_dialog.models import (
    SPLIT,
    STANDARD,
    CandidateTable,
    CheckpointError,
    EmbeddingHyper,
    MemNN,
    MemNNHyper,
    SupervisedEmbedding,
    build_memories,
    encode_dialog,
    encode_inputs,
    load_checkpoint,
    predict,
    save_checkpoint,
    se_encode_input,
)
from persona_dialog.models.checkpoint import decode_checkpoint, encode_checkpoint
from persona_dialog.models.encoding import sample_negatives
from persona_dialog.numerics import grad_check
from test_oracle import WORKED_PT1

PT3_PROFILE = "1 female young non-veg pizza\n2 resto_rome_moderate_italian_8stars_1 R_rating 8\n3 hi\they girl how is it going\n"


def _toy(task, halves, n=1, seed=3):
    d = generate_split(task, "trn", n, seed, halves)[0]
    cands = sorted({t.bot for t in d.turns if t.bot} | {"hello there", "api_call x y z w"})
    vocab = build_vocabulary([d], cands)
    return d, vocab, CandidateTable.build(cands, vocab)


# -- memories ---------------------------------------------------------------

def test_worked_pt1_memory_has_fifteen_entries():
    d = parse_dialog(WORKED_PT1)
    conv, profile = build_memories(d, len(d.turns) - 1, STANDARD)
    assert profile is None
    assert len(conv) == 15
    assert conv[0].text == "female elderly" and conv[0].time == 1
    assert [e.time for e in conv] == list(range(1, 16))
    assert conv[1].locutor == "user" and conv[2].locutor == "bot"
    assert conv[1].tokens[0] == "$u" and conv[2].tokens[0] == "$b"


def test_split_memory_holds_profile_attributes():
    d = parse_dialog(PT3_PROFILE)
    conv, profile = build_memories(d, 2, SPLIT)
    assert [e.text for e in profile] == ["female", "young", "non-veg", "pizza"]
    assert [e.text for e in conv] == ["resto_rome_moderate_italian_8stars_1 R_rating 8"]
    assert conv[0].tokens[0] == "$u"


def test_empty_history_standard_memory_is_profile_only():
    d = parse_dialog(WORKED_PT1)
    conv, _ = build_memories(d, 1, STANDARD)
    assert [e.text for e in conv] == ["female elderly"]


def test_encoded_visibility_matches_build_memories(halves):
    d, vocab, table = _toy("PT5", halves)
    for variant in (STANDARD, SPLIT):
        enc = encode_dialog(d, vocab, table, variant)
        for t, ti in enumerate(enc.turn_index):
            conv, _ = build_memories(d, int(ti), variant)
            assert enc.n_visible[t] == len(conv)
            assert [e.text for e in enc.entries[: len(conv)]] == [e.text for e in conv]


# -- supervised embedding input ------------------------------------------------

def test_se_input():
    d = parse_dialog(WORKED_PT1)
    assert se_encode_input(d, 1, use_history=False) == ["hi"]
    assert se_encode_input(d, 1, use_history=True) == ["female", "elderly", "hi"]
    full = se_encode_input(d, 3, use_history=True)
    parts = ["female elderly", d.turns[1].text, d.turns[1].bot, d.turns[2].text, d.turns[2].bot, d.turns[3].text]
    assert len(full) == sum(len(p.split()) for p in parts)


def test_se_history_sum_matches_token_bag(halves):
    d, vocab, table = _toy("PT1", halves)
    m = SupervisedEmbedding(EmbeddingHyper(dim=6, use_history=True), len(vocab), dtype=np.float64)
    enc = encode_inputs(d, vocab, table)
    x = m.input_embeddings(enc)
    for t, ti in enumerate(enc.turn_index):
        tokens = se_encode_input(d, int(ti), True)
        assert np.allclose(x[t], m.params["A"][[vocab[w] for w in tokens]].sum(axis=0))


# -- gradients ------------------------------------------------------------------

def _check(model, enc, table, n_neg, seed=0):
    sel = np.concatenate([enc.gold[:, None], sample_negatives(np.random.default_rng(seed), len(table), enc.gold, n_neg)], 1)
    f = lambda P: model.loss_and_grads(enc, table, sel, P)[:2]
    g = lambda P: model.loss_and_grads(enc, table, sel, P)[2]
    return grad_check(f, model.params, eps=1e-6, n_samples=60, margins_fn=g)


@pytest.mark.parametrize("use_history", [True, False])
def test_embedding_gradient(use_history):
    text = "1 male young\n2 hi\they dude what is up\n3 may i have a table\ti'm on your request\n"
    d = parse_dialog(text)
    words = sorted({w for line in text.split("\n") for w in line.split()[1:]} | {"x", "y"})
    vocab = Vocabulary(tuple(words))
    assert len(vocab) <= 20
    vocab = Vocabulary(tuple(words + [f"pad{i}" for i in range(20 - len(words))]))
    table = CandidateTable.build(["hey dude what is up", "i'm on your request", "x y", "hi x", "y"], vocab)
    m = SupervisedEmbedding(EmbeddingHyper(dim=4, negatives=3, use_history=use_history), 20, dtype=np.float64)
    assert _check(m, encode_inputs(d, vocab, table), table, 3) < 1e-6


@pytest.mark.parametrize("variant", [STANDARD, SPLIT])
def test_memnn_three_hop_gradient(variant):
    # 4 memories before the final exchange, 5 candidates, V=30, d=5
    text = ("1 female young non-veg pizza\n2 resto_a R_rating 8\n3 hi\they girl how is it going\n"
            "4 <SILENCE>\thow about this one: resto_a\n")
    d = parse_dialog(text)
    words = sorted({w for line in text.split("\n") for w in line.split()[1:]} | {"$u", "$b", "resto_b"})
    vocab = Vocabulary(tuple(words + [f"pad{i}" for i in range(30 - len(words))]))
    table = CandidateTable.build(["hey girl how is it going", "how about this one: resto_a",
                                  "how about this one: resto_b", "hi", "resto_b R_rating"], vocab)
    m = MemNN(MemNNHyper(dim=5, hops=3, negatives=3, variant=variant, memory_size=10), 30, dtype=np.float64)
    enc = encode_dialog(d, vocab, table, variant)
    assert _check(m, enc, table, 3) < 1e-4


def test_memnn_gradient_on_generated_dialog(halves):
    d, vocab, table = _toy("PT3", halves)
    for variant in (STANDARD, SPLIT):
        m = MemNN(MemNNHyper(dim=5, hops=3, negatives=3, variant=variant, memory_size=30), len(vocab), dtype=np.float64)
        assert _check(m, encode_dialog(d, vocab, table, variant), table, 3) < 1e-4


# -- forward properties -----------------------------------------------------------

def test_attention_rows_sum_to_one(halves):
    d, vocab, table = _toy("PT5", halves)
    for variant, dtype, tol in ((STANDARD, np.float64, 1e-12), (SPLIT, np.float32, 1e-6)):
        m = MemNN(MemNNHyper(hops=3, variant=variant), len(vocab), dtype=dtype)
        enc = encode_dialog(d, vocab, table, variant)
        _, trace = m.forward(enc)
        assert len(trace.conversation) == 3
        seen = enc.n_visible > 0
        for p in trace.conversation:
            assert np.all(np.abs(p[seen].sum(axis=1) - 1) < tol)
            # nothing to read before the first message in the split layout
            assert not p[~seen].any()
            assert np.all(p >= 0) and np.all(p <= 1)
        for p in trace.profile:
            assert np.all(np.abs(p.sum(axis=1) - 1) < tol)


def test_single_memory_gets_full_attention():
    d = parse_dialog("1 male young\n2 hi\they dude what is up\n")
    vocab = build_vocabulary([d], ["hey dude what is up"])
    table = CandidateTable.build(["hey dude what is up"], vocab)
    m = MemNN(MemNNHyper(hops=3), len(vocab), dtype=np.float64)
    _, trace = m.forward(encode_dialog(d, vocab, table))
    for p in trace.conversation:
        assert p[0, 0] == 1.0 and not p[0, 1:].any()


def test_one_hop_score_hand_computed():
    text = "1 male young\n2 hi\tc\n3 q\tc\n"
    d = parse_dialog(text)
    vocab = Vocabulary(("$b", "$u", "c", "hi", "male", "q", "young"))
    table = CandidateTable.build(["c", "hi"], vocab)
    V, dim = len(vocab), len(vocab)
    m = MemNN(MemNNHyper(dim=dim, hops=1), V, dtype=np.float64)
    m.params["A"] = np.eye(V)
    m.params["T"] = np.zeros_like(m.params["T"])
    enc = encode_dialog(d, vocab, table)
    scores, trace = m.scores(enc, table)
    e = np.eye(V)
    mems = [e[vocab["$u"]] + e[vocab["male"]] + e[vocab["young"]], e[vocab["$u"]] + e[vocab["hi"]], e[vocab["$b"]] + e[vocab["c"]]]
    q = e[vocab["q"]]
    logits = np.array([q @ x for x in mems])
    p = np.exp(logits) / np.exp(logits).sum()
    u = q + sum(pi * x for pi, x in zip(p, mems))
    assert np.allclose(trace.conversation[0][1, :3], p)
    assert not trace.conversation[0][1, 3:].any()
    assert np.allclose(scores[1], [u @ e[vocab["c"]], u @ e[vocab["hi"]]])


def test_zero_time_embedding_equals_timeless_model(halves):
    d, vocab, table = _toy("PT1", halves)
    m = MemNN(MemNNHyper(hops=2), len(vocab), dtype=np.float64)
    m.params["T"][:] = 0
    enc = encode_dialog(d, vocab, table)
    u, _ = m.forward(enc)
    # timeless reference computed directly
    A = m.params["A"]
    mem = np.stack([A[[vocab[t] for t in e.tokens]].sum(0) for e in enc.entries])
    for t in range(len(enc)):
        ref = A[enc.query_ids[t][enc.query_ids[t] >= 0]].sum(0)
        n = enc.n_visible[t]
        for k in range(2):
            logits = mem[:n] @ ref
            p = np.exp(logits - logits.max())
            p /= p.sum()
            ref = m.params["R"][k] @ ref + p @ mem[:n]
        assert np.allclose(u[t], ref)


def test_split_with_profile_path_zeroed_matches_conversation_only(halves):
    d, vocab, table = _toy("PT3", halves)
    split = MemNN(MemNNHyper(hops=3, variant=SPLIT), len(vocab), dtype=np.float64)
    enc = encode_dialog(d, vocab, table, SPLIT)
    # a profile memory whose entries embed to zero contributes nothing
    params = {k: v.copy() for k, v in split.params.items()}
    for e in enc.profile_entries:
        params["A"][vocab[e.text]] = 0
    u_zeroed, _ = split.forward(enc, params)
    enc_none = encode_dialog(d, vocab, table, SPLIT)
    enc_none.profile_entries, enc_none.profile_ids = [], enc_none.profile_ids[:0]
    # conversation-only reference: the same network with the profile read removed
    ref = MemNN(MemNNHyper(hops=3, variant=STANDARD), len(vocab), dtype=np.float64, params=params)
    enc_std = encode_dialog(d, vocab, table, SPLIT)
    enc_std.variant = STANDARD
    u_ref, _ = ref.forward(enc_std)
    assert np.allclose(u_zeroed, u_ref)


def test_split_and_standard_differ_only_in_layout():
    d = parse_dialog("1 male young\n2 hi\they dude what is up\n3 <SILENCE>\they dude what is up\n")
    vocab = build_vocabulary([d], ["hey dude what is up"])
    table = CandidateTable.build(["hey dude what is up"], vocab)
    std_enc, spl_enc = encode_dialog(d, vocab, table, STANDARD), encode_dialog(d, vocab, table, SPLIT)
    # same content: the standard profile line is the split profile memory, flattened
    assert std_enc.entries[0].text == " ".join(e.text for e in spl_enc.profile_entries)
    assert [e.text for e in std_enc.entries[1:]] == [e.text for e in spl_enc.entries]
    std = MemNN(MemNNHyper(hops=1, variant=STANDARD), len(vocab), dtype=np.float64)
    spl = MemNN(MemNNHyper(hops=1, variant=SPLIT), len(vocab), dtype=np.float64, params=std.params)
    a, _ = std.scores(std_enc, table)
    b, _ = spl.scores(spl_enc, table)
    assert a.shape == b.shape and not np.allclose(a, b)


# -- prediction -------------------------------------------------------------------

def test_predict_tie_break_and_invariance(halves):
    d, vocab, table = _toy("PT1", halves)
    m = MemNN(MemNNHyper(hops=1), len(vocab), seed=4)
    enc = encode_dialog(d, vocab, table)
    idx, _ = predict(m, enc, table)
    again, _ = predict(MemNN(MemNNHyper(hops=1), len(vocab), seed=4), enc, table)
    assert np.array_equal(idx, again)
    scores, _ = m.scores(enc, table)
    assert np.array_equal(np.argmax(scores + 3.5, axis=1), idx)
    assert np.array_equal(np.argmax(scores * 2.0, axis=1), idx)

    class Flat:
        def scores(self, enc, candidates, cand_emb=None):
            return np.zeros((2, 4)), None
    assert list(predict(Flat(), None, [0, 1, 2, 3])[0]) == [0, 0]
    with pytest.raises(ValueError):
        predict(Flat(), None, [])


def test_train_step_errors(halves):
    d, vocab, table = _toy("PT1", halves)
    m = SupervisedEmbedding(EmbeddingHyper(dim=4, negatives=len(table)), len(vocab))
    with pytest.raises(ValueError):
        m.train_step(encode_inputs(d, vocab, table), table, np.random.default_rng(0))
    enc = encode_dialog(d, vocab, table)
    enc.gold[0] = -1
    with pytest.raises(ValueError):
        MemNN(MemNNHyper(negatives=2), len(vocab)).train_step(enc, table, np.random.default_rng(0))


def test_satisfied_margin_gives_zero_update(halves):
    d, vocab, table = _toy("PT1", halves)
    m = SupervisedEmbedding(EmbeddingHyper(dim=4, negatives=2, use_history=False), len(vocab), dtype=np.float64)
    enc = encode_inputs(d, vocab, table)
    sel = np.concatenate([enc.gold[:, None], sample_negatives(np.random.default_rng(1), len(table), enc.gold, 2)], 1)
    # make every gold score dominate by inflating the gold candidates' B rows along the input direction
    x = m.input_embeddings(enc)
    loss, grads, margins = m.loss_and_grads(enc, table, sel)
    m2 = SupervisedEmbedding(m.hp, len(vocab), params={"A": m.params["A"], "B": m.params["B"] * 0})
    loss0, grads0, _ = m2.loss_and_grads(enc, table, sel)
    assert loss0 == pytest.approx(m.hp.margin * sel[:, 1:].size)
    big = SupervisedEmbedding(m.hp, len(vocab), params={"A": m.params["A"].copy(), "B": np.zeros_like(m.params["B"])})
    for t, g in enumerate(enc.gold):
        for tok in table.ids[g][table.ids[g] >= 0]:
            big.params["B"][tok] += 100 * x[t] / max(np.linalg.norm(x[t]), 1e-9) ** 2
    loss_b, grads_b, margins_b = big.loss_and_grads(enc, table, sel)
    if np.all(margins_b < 0):
        assert loss_b == 0
        assert not grads_b["A"].any() and not grads_b["B"].any()


def test_negative_sampling(halves):
    rng = np.random.default_rng(0)
    gold = np.array([0, 5, 9])
    neg = sample_negatives(rng, 10, gold, 9)
    for g, row in zip(gold, neg):
        assert sorted(row) == [i for i in range(10) if i != g]
    pool = np.array([2, 4, 6, 8])
    neg = sample_negatives(rng, 10, np.array([4, 3]), 3, pool)
    assert set(neg[0]) == {2, 6, 8}
    assert set(neg[1]) <= set(pool)
    with pytest.raises(ValueError):
        sample_negatives(rng, 10, gold, 10)


# -- checkpoints --------------------------------------------------------------------

def test_checkpoint_round_trip_is_bit_identical(tmp_path, halves):
    d, vocab, table = _toy("PT3", halves)
    for model in (MemNN(MemNNHyper(hops=3, variant=SPLIT), len(vocab), seed=2),
                  SupervisedEmbedding(EmbeddingHyper.for_task("PT1"), len(vocab), seed=2)):
        path = tmp_path / f"{model.kind}.ckpt"
        save_checkpoint(path, model, vocab.digest())
        back, header = load_checkpoint(path, vocab.digest())
        assert header["kind"] == model.kind
        assert back.hp == model.hp
        for k in model.params:
            assert back.params[k].dtype == np.float32
            assert back.params[k].tobytes() == model.params[k].tobytes()
        enc = encode_dialog(d, vocab, table, SPLIT) if model.kind == "memnn" else encode_inputs(d, vocab, table)
        assert np.array_equal(predict(back, enc, table)[0], predict(model, enc, table)[0])
        assert encode_checkpoint(back, vocab.digest()) == path.read_bytes()


def test_checkpoint_refuses_foreign_vocabulary_and_corruption(tmp_path, halves):
    d, vocab, table = _toy("PT1", halves)
    model = MemNN(MemNNHyper(hops=1), len(vocab))
    blob = encode_checkpoint(model, vocab.digest())
    with pytest.raises(CheckpointError):
        decode_checkpoint(blob, Vocabulary(("other",)).digest())
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"XXXXXXXX" + blob[8:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(blob[:-4])
    model.params["A"][0, 0] = np.nan
    with pytest.raises(CheckpointError):
        encode_checkpoint(model, vocab.digest())
