"""Add-One-In supervision tests: multisets, scans, candidate selection, filtering."""

import itertools

import numpy as np
import pytest

from repeatgain import aoi
from repeatgain.errors import ConfigError, OracleError
from repeatgain.oracles import SyntheticOracleSpec, generate_synthetic_dataset


@pytest.fixture(scope="module")
def small_world():
    spec = SyntheticOracleSpec(seed=3, n_frames=8, dim=16, n_key_frames=3, n_tokens=4)
    ds = generate_synthetic_dataset(spec, 6)
    return ds, ds.oracle()


def test_repeat_multiset_edges():
    assert aoi.repeat_multiset(3, 0) == [0, 0, 1, 2]
    assert aoi.repeat_multiset(3, 2) == [0, 1, 2, 2]


def test_repeat_multiset_exhaustive_small_n():
    for n in range(1, 9):
        base = aoi.baseline_multiset(n)
        for i in range(n):
            seq = aoi.repeat_multiset(n, i)
            assert len(seq) == n + 1
            assert sorted(seq) == sorted(base + [i])
            # the duplicate is adjacent to its original and order is preserved
            j = seq.index(i)
            assert seq[j + 1] == i
            assert [x for k, x in enumerate(seq) if k != j] == base
            counts = np.bincount(seq, minlength=n)
            assert (counts == 2).sum() == 1 and (counts == 1).sum() == n - 1


def test_repeat_multiset_out_of_range():
    with pytest.raises(ConfigError):
        aoi.repeat_multiset(3, 3)


def test_baseline_logprob_matches_closed_form(small_world):
    ds, oracle = small_world
    for sample in ds.samples[:3]:
        got = aoi.baseline_logprob(sample, oracle)
        assert got == ds.truth[sample.sample_id].base_logprob
        assert got == aoi.baseline_logprob(sample, oracle)  # deterministic


def test_scan_recovers_planted_gains_exactly(small_world):
    ds, oracle = small_world
    for sample in ds.samples:
        record = aoi.scan_repeat_gains(sample, range(sample.n_frames), oracle)
        assert record.complete and not record.failed
        planted = np.asarray(ds.truth[sample.sample_id].gains)
        np.testing.assert_allclose(record.gains(), planted, atol=1e-12)


def test_scan_call_accounting(small_world):
    ds, oracle = small_world

    class Counting:
        oracle_id = oracle.oracle_id

        def __init__(self):
            self.calls = 0

        def logprob(self, sample_id, sequence, answer_id):
            self.calls += 1
            return oracle.logprob(sample_id, sequence, answer_id)

        def sample_answer(self, *a, **k):
            raise AssertionError("not used")

    counting = Counting()
    sample = ds.samples[0]
    aoi.scan_repeat_gains(sample, [0, 3, 5], counting)
    assert counting.calls == 4  # |C| + 1


def test_scan_rejects_duplicate_candidates(small_world):
    ds, oracle = small_world
    with pytest.raises(ConfigError):
        aoi.scan_repeat_gains(ds.samples[0], [1, 1, 2], oracle)


def test_scan_gain_shift_invariance(small_world):
    """Adding a constant to every oracle logprob leaves all gains unchanged."""
    ds, oracle = small_world

    class Shifted:
        oracle_id = "shifted"

        def logprob(self, sample_id, sequence, answer_id):
            return oracle.logprob(sample_id, sequence, answer_id) - 7.25

        def sample_answer(self, *a, **k):
            raise AssertionError("not used")

    sample = ds.samples[1]
    base = aoi.scan_repeat_gains(sample, range(8), oracle).gains()
    shifted = aoi.scan_repeat_gains(sample, range(8), Shifted()).gains()
    np.testing.assert_allclose(shifted, base, atol=1e-12)


def test_scan_inert_oracle_gives_zero_gains(small_world):
    ds, _ = small_world

    class Inert:
        oracle_id = "inert"

        def logprob(self, sample_id, sequence, answer_id):
            return -1.25

        def sample_answer(self, *a, **k):
            raise AssertionError("not used")

    record = aoi.scan_repeat_gains(ds.samples[0], range(8), Inert())
    np.testing.assert_array_equal(record.gains(), np.zeros(8))


def test_scan_partial_failure_marks_incomplete(small_world):
    ds, oracle = small_world

    class Flaky:
        oracle_id = "flaky"

        def logprob(self, sample_id, sequence, answer_id):
            counts = np.bincount(sequence, minlength=8)
            if counts[2] == 2 or counts[5] == 2:
                raise OracleError("injected failure")
            return oracle.logprob(sample_id, sequence, answer_id)

        def sample_answer(self, *a, **k):
            raise AssertionError("not used")

    record = aoi.scan_repeat_gains(ds.samples[0], range(8), Flaky())
    assert not record.complete
    assert record.failed == [2, 5]
    assert record.candidate_frames == [0, 1, 3, 4, 6, 7]


def test_scan_concurrent_matches_serial(small_world):
    ds, oracle = small_world
    sample = ds.samples[2]
    serial = aoi.scan_repeat_gains(sample, range(8), oracle, max_in_flight=1)
    fanned = aoi.scan_repeat_gains(sample, range(8), oracle, max_in_flight=4)
    assert serial.to_json() == fanned.to_json()


def test_record_json_round_trip(tmp_path, small_world):
    ds, oracle = small_world
    record = aoi.scan_repeat_gains(ds.samples[0], [0, 2, 4], oracle)
    path = tmp_path / "r.json"
    record.save(path)
    loaded = aoi.RepeatGainRecord.load(path)
    assert loaded.to_json() == record.to_json()
    assert loaded.gains().tobytes() == record.gains().tobytes()


# --- candidate selection -----------------------------------------------------------


def test_select_candidates_full_partition():
    rng = np.random.default_rng(0)
    scores = rng.normal(size=32)
    c = aoi.select_candidates(scores, 16, seed=1)
    assert c == list(range(32))  # top half + random half partition everything


def test_select_candidates_top_and_random_halves():
    scores = np.array([3.0, 1.0, 2.0, 0.0])
    c = aoi.select_candidates(scores, 2, seed=5)
    assert set(c) >= {0, 2}
    assert len(c) == 4  # both remaining frames drawn


def test_select_candidates_tie_break_prefers_lower_index():
    scores = np.array([1.0, 2.0, 2.0, 0.5, 2.0])
    c = aoi.select_candidates(scores, 2, seed=0)
    assert {1, 2} <= set(c) and 4 not in set(c[:2])  # ties resolve to indices 1, 2


def test_select_candidates_deterministic_per_seed():
    rng = np.random.default_rng(2)
    scores = rng.normal(size=24)
    a = aoi.select_candidates(scores, 6, seed=42)
    b = aoi.select_candidates(scores, 6, seed=42)
    assert a == b
    assert len(a) == 12 and len(set(a)) == 12


def test_select_candidates_k_too_large():
    with pytest.raises(ConfigError):
        aoi.select_candidates(np.zeros(4), 5, seed=0)


# --- dataset filtering ---------------------------------------------------------------


class FixedAnswerOracle:
    oracle_id = "fixed"

    def __init__(self, pattern):
        self._pattern = itertools.cycle(pattern)

    def logprob(self, sample_id, sequence, answer_id):
        return -1.0

    def sample_answer(self, sample_id, sequence, temperature=1.0):
        return next(self._pattern)


def make_dummy_samples(n):
    spec = SyntheticOracleSpec(seed=9, n_frames=4, dim=8, n_key_frames=2, n_tokens=3)
    return generate_synthetic_dataset(spec, n).samples


def test_filter_drops_always_correct_and_always_wrong():
    samples = make_dummy_samples(1)
    answer = samples[0].answer_id
    always_right = FixedAnswerOracle([answer])
    always_wrong = FixedAnswerOracle([(answer + 1) % 4])
    mixed = FixedAnswerOracle([answer, answer, (answer + 1) % 4, answer, answer])
    assert aoi.filter_dataset(samples, always_right) == []
    assert aoi.filter_dataset(samples, always_wrong) == []
    assert aoi.filter_dataset(samples, mixed) == samples


def test_filter_retention_rate_matches_binomial():
    """p=0.5 per draw -> retention 1 - 2*(1/2)^5 = 93.75%."""
    spec = SyntheticOracleSpec(seed=11, n_frames=4, dim=8, n_key_frames=2, n_tokens=3)
    ds = generate_synthetic_dataset(spec, 1000)
    oracle = ds.oracle()
    # huge temperature flattens the correctness sigmoid to exactly 1/2
    retained = aoi.filter_dataset(ds.samples, oracle, trials=5, temperature=1e9)
    rate = len(retained) / len(ds.samples)
    assert abs(rate - 0.9375) < 0.03


def test_filter_skips_oracle_failures():
    samples = make_dummy_samples(3)

    class Failing:
        oracle_id = "fail"

        def logprob(self, *a):
            return -1.0

        def sample_answer(self, sample_id, sequence, temperature=1.0):
            if sample_id == samples[1].sample_id:
                raise OracleError("boom")
            return samples[0].answer_id if sample_id == samples[0].sample_id else 0

    retained = aoi.filter_dataset(samples, Failing())
    assert samples[1] not in retained
