import numpy as np
import pytest

from sidewatch import synthgen, telemetry
from sidewatch.errors import BadSpecError
from sidewatch.synthgen import (
    CorpusSpec,
    MalwareEffect,
    MalwareProfile,
    corpus_spec_from_dict,
    generate_benign_trace,
    generate_corpus,
    generate_malicious_trace,
    malware_profile,
    workload_profile,
)
from sidewatch.telemetry import validate_trace

from conftest import micro_spec


def small_spec(**overrides):
    kwargs = dict(num_features=6, duration_s=100.0, onset_choices=(20.0, 40.0),
                  seed=3, difficulty=1.0)
    kwargs.update(overrides)
    return CorpusSpec(**kwargs)


class TestBenignGeneration:
    def test_row_count_from_duration(self):
        spec = CorpusSpec(num_features=4)
        trace = generate_benign_trace(workload_profile("office", 4), spec, seed=1)
        assert trace.num_rows == 960  # 480 s at 0.5 s

    def test_determinism(self):
        spec = small_spec()
        p = workload_profile("game", 6)
        a = generate_benign_trace(p, spec, seed=9)
        b = generate_benign_trace(p, spec, seed=9)
        assert a == b

    def test_validates_clean(self):
        spec = small_spec()
        for kind in synthgen.WORKLOAD_KINDS:
            trace = generate_benign_trace(workload_profile(kind, 6), spec, seed=4)
            assert validate_trace(trace) == []
            assert trace.labels.sum() == 0


class TestMaliciousGeneration:
    def test_onset_row_labeling(self):
        spec = small_spec()
        trace = generate_malicious_trace(
            workload_profile("office", 6), malware_profile("worm", 6, spec.seed),
            spec, seed=5, onset_s=40.0)
        onset_row = int(round(40.0 / 0.5))
        assert trace.labels[onset_row - 1] == 0
        assert trace.labels[onset_row] == 1
        assert np.all(trace.labels[onset_row:] == 1)
        assert validate_trace(trace) == []

    def test_pre_onset_rows_equal_paired_benign(self):
        spec = small_spec()
        wl = workload_profile("system-tool", 6)
        mal = malware_profile("ransomware", 6, spec.seed)
        benign = generate_benign_trace(wl, spec, seed=11)
        malicious = generate_malicious_trace(wl, mal, spec, seed=11, onset_s=40.0)
        onset_row = int(round(40.0 / 0.5))
        np.testing.assert_array_equal(benign.features[:onset_row],
                                      malicious.features[:onset_row])

    def test_zero_difficulty_identical_to_benign_except_labels(self):
        spec = small_spec(difficulty=0.0)
        wl = workload_profile("office", 6)
        mal = malware_profile("rootkit", 6, spec.seed)
        benign = generate_benign_trace(wl, spec, seed=12)
        malicious = generate_malicious_trace(wl, mal, spec, seed=12, onset_s=20.0)
        np.testing.assert_array_equal(benign.features, malicious.features)
        assert malicious.labels.sum() > 0

    def test_onset_drawn_from_spec_set(self):
        spec = small_spec()
        wl = workload_profile("office", 6)
        mal = malware_profile("worm", 6, spec.seed)
        seen = set()
        for seed in range(20):
            trace = generate_malicious_trace(wl, mal, spec, seed=seed)
            assert trace.meta.onset_s in spec.onset_choices
            seen.add(trace.meta.onset_s)
        assert len(seen) > 1

    def test_beacon_autocorrelation_peak(self):
        # 10-second beacon at 0.5s sampling: autocorrelation of the beacon
        # channel peaks at lag 20 among mid-range lags.
        spec = small_spec(duration_s=200.0, onset_choices=(20.0,), difficulty=1.0)
        profile = MalwareProfile(
            kind="trojan-backdoor",
            effects=(MalwareEffect("periodic-burst", (2,), 8.0, period_s=10.0),),
        )
        wl = workload_profile("os-only", 6)
        trace = generate_malicious_trace(wl, profile, spec, seed=3, onset_s=20.0)
        post = trace.features[40:, 2] - trace.features[40:, 2].mean()
        acf = np.correlate(post, post, mode="full")[post.size - 1 :]
        lags = np.arange(5, 61)
        peak_lag = lags[np.argmax(acf[5:61])]
        assert peak_lag == 20

    def test_beacon_period_validation(self):
        eff = MalwareEffect("periodic-burst", (0,), 3.0, period_s=0.6)
        with pytest.raises(BadSpecError):
            eff.validate(0.5)


class TestCorpus:
    def test_default_spec_counts(self, tmp_path):
        spec = CorpusSpec(num_features=4, duration_s=10.0,
                          onset_choices=(2.0, 3.0, 4.0))
        manifest = generate_corpus(spec, tmp_path)
        mal = [e for e in manifest.entries if e.meta.is_malicious]
        ben = [e for e in manifest.entries if not e.meta.is_malicious]
        assert len(manifest.entries) == 57
        assert len(mal) == 29
        assert len(ben) == 28
        by_cat = {}
        for e in manifest.entries:
            by_cat[e.meta.category] = by_cat.get(e.meta.category, 0) + 1
        assert by_cat["ransomware"] == 11
        assert by_cat["benchmark"] == 12

    def test_empty_counts(self, tmp_path):
        spec = CorpusSpec(benign_counts={}, malware_counts={}, num_features=3,
                          duration_s=5.0, onset_choices=())
        manifest = generate_corpus(spec, tmp_path)
        assert manifest.entries == []

    def test_regeneration_byte_identical(self, tmp_path):
        spec = micro_spec(seed=21)
        d1, d2 = tmp_path / "a", tmp_path / "b"
        generate_corpus(spec, d1)
        generate_corpus(spec, d2)
        files1 = sorted(p.name for p in d1.glob("*.csv"))
        files2 = sorted(p.name for p in d2.glob("*.csv"))
        assert files1 == files2
        for name in files1:
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
        assert (d1 / "manifest.json").read_bytes() == (d2 / "manifest.json").read_bytes()

    def test_all_generated_traces_validate_clean(self, tmp_path):
        spec = micro_spec(seed=22)
        manifest = generate_corpus(spec, tmp_path)
        assert manifest.skipped == []
        for trace in telemetry.load_traces(manifest, tmp_path):
            assert validate_trace(trace) == []

    def test_bayes_oracle_separates_at_difficulty_one(self, tmp_path):
        # Thresholding the known sustained-effect channels must classify
        # every file correctly at difficulty >= 1.
        spec = micro_spec(seed=23, difficulty=1.0,
                          benign_counts={"os-only": 1, "benchmark": 2, "office": 1},
                          malware_counts={"ransomware": 1, "worm": 1, "rootkit": 1,
                                          "trojan-backdoor": 1})
        manifest = generate_corpus(spec, tmp_path)
        traces = telemetry.load_traces(manifest, tmp_path)
        correct = 0
        run_need = 40
        for trace in traces:
            flagged = False
            for kind in spec.malware_counts:
                profile = malware_profile(kind, spec.num_features, spec.seed)
                channels = list(profile.sustained_channels())
                if not channels:
                    continue
                # Workload means differ per kind, so standardize against
                # each trace's own early-rows baseline (always benign:
                # onsets are >= 20s into the trace).
                base = trace.features[:30, channels]
                mu, sd = base.mean(axis=0), base.std(axis=0) + 1e-9
                score = ((trace.features[:, channels] - mu) / sd).mean(axis=1)
                run = 0
                for s in score:
                    run = run + 1 if s > 1.5 else 0
                    if run >= run_need:
                        flagged = True
                        break
                if flagged:
                    break
            correct += int(flagged == trace.meta.is_malicious)
        assert correct == len(traces)

    def test_spec_from_dict_rejects_unknown_keys(self):
        with pytest.raises(BadSpecError):
            corpus_spec_from_dict({"bogus": 1})

    def test_spec_validation(self):
        with pytest.raises(BadSpecError):
            CorpusSpec(num_features=0).validate()
        with pytest.raises(BadSpecError):
            CorpusSpec(onset_choices=(999.0,)).validate()
        with pytest.raises(BadSpecError):
            CorpusSpec(benign_counts={"nonsense": 1}).validate()

    def test_filenames_follow_convention(self, tmp_path):
        spec = micro_spec(seed=24)
        generate_corpus(spec, tmp_path)
        for p in tmp_path.glob("*.csv"):
            meta = telemetry.parse_trace_filename(p.name)
            assert meta.category in telemetry.CATEGORIES
