import json
import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualhead_pd.data import (
    FormatError,
    ManifestEntry,
    ManifestError,
    Utterance,
    check_speaker_disjoint,
    load_manifest,
    load_utterances,
    read_audio,
    read_matrix,
    write_audio,
    write_manifest,
    write_matrix,
)
from dualhead_pd.features import Waveform
from dualhead_pd.model import TaskType


def entry(i=0, **kw):
    base = dict(utterance_id=f"u{i}", speaker_id=f"s{i}", dataset="lang_a", task=TaskType.DDK, label=i % 2,
                audio_path=f"audio/u{i}.wav", ssl_feature_path=f"ssl/u{i}.ftrx")
    base.update(kw)
    return ManifestEntry(**base)


def raw_wav(path, pcm, channels=1, width=2, rate=16000):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


class TestManifest:
    def test_empty_file(self, tmp_path):
        (tmp_path / "m.jsonl").write_text("")
        assert load_manifest(tmp_path / "m.jsonl") == []

    def test_round_trip(self, tmp_path):
        entries = [entry(i, task=TaskType.CONTINUOUS if i % 3 else TaskType.DDK) for i in range(6)]
        write_manifest(tmp_path / "m.jsonl", entries)
        assert load_manifest(tmp_path / "m.jsonl") == entries

    def test_missing_task_reports_line(self, tmp_path):
        good = entry(0).to_record()
        bad = entry(1).to_record()
        del bad["task"]
        (tmp_path / "m.jsonl").write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n")
        with pytest.raises(ManifestError, match=r":2: .*task"):
            load_manifest(tmp_path / "m.jsonl")

    def test_malformed_json_reports_line(self, tmp_path):
        (tmp_path / "m.jsonl").write_text(json.dumps(entry(0).to_record()) + "\n{not json\n")
        with pytest.raises(ManifestError, match=":2:"):
            load_manifest(tmp_path / "m.jsonl")

    def test_duplicate_id(self, tmp_path):
        write_manifest(tmp_path / "m.jsonl", [entry(0), entry(0, speaker_id="other")])
        with pytest.raises(ManifestError, match="duplicate"):
            load_manifest(tmp_path / "m.jsonl")

    def test_extra_field_rejected(self, tmp_path):
        rec = entry(0).to_record()
        rec["gender"] = "f"
        (tmp_path / "m.jsonl").write_text(json.dumps(rec) + "\n")
        with pytest.raises(ManifestError, match="gender"):
            load_manifest(tmp_path / "m.jsonl")

    @pytest.mark.parametrize("kw", [dict(label=2), dict(utterance_id=""), dict(audio_path=None, ssl_feature_path=None)])
    def test_entry_invariants(self, kw):
        with pytest.raises(ManifestError):
            entry(0, **kw)

    def test_speaker_overlap_detected(self):
        with pytest.raises(ManifestError):
            check_speaker_disjoint({"train": [entry(0)], "test": [entry(1, speaker_id="s0")]})

    def test_same_speaker_id_in_other_dataset_is_fine(self):
        check_speaker_disjoint({"train": [entry(0)], "test": [entry(1, speaker_id="s0", dataset="lang_b")]})


class TestAudio:
    def test_silence(self, tmp_path):
        raw_wav(tmp_path / "a.wav", np.zeros(16000, dtype="<i2"))
        w = read_audio(tmp_path / "a.wav")
        assert w.duration == 1.0 and not w.samples.any()

    def test_square_wave_extremes(self, tmp_path):
        raw_wav(tmp_path / "a.wav", np.tile(np.array([32767, -32767], dtype="<i2"), 50))
        w = read_audio(tmp_path / "a.wav")
        np.testing.assert_array_equal(np.unique(np.abs(w.samples)), [32767 / 32768])

    def test_round_trip(self, tmp_path, rng):
        x = rng.uniform(-1, 1, 5000)
        write_audio(tmp_path / "a.wav", Waveform(x, 8000))
        w = read_audio(tmp_path / "a.wav")
        assert w.sample_rate == 8000
        assert np.max(np.abs(w.samples - x)) <= 1 / 32768

    def test_stereo_rejected(self, tmp_path):
        raw_wav(tmp_path / "a.wav", np.zeros(200, dtype="<i2"), channels=2)
        with pytest.raises(FormatError, match="channels"):
            read_audio(tmp_path / "a.wav")

    def test_8bit_rejected(self, tmp_path):
        raw_wav(tmp_path / "a.wav", np.zeros(200, dtype=np.uint8), width=1)
        with pytest.raises(FormatError, match="sample width"):
            read_audio(tmp_path / "a.wav")

    def test_not_riff(self, tmp_path):
        (tmp_path / "a.wav").write_bytes(b"OggS" + bytes(40))
        with pytest.raises(FormatError):
            read_audio(tmp_path / "a.wav")


class TestMatrix:
    def test_one_by_one_is_16_bytes(self, tmp_path):
        write_matrix(tmp_path / "m.ftrx", np.zeros((1, 1)))
        raw = (tmp_path / "m.ftrx").read_bytes()
        assert len(raw) == 16
        assert raw == b"FTRX" + struct.pack("<II", 1, 1) + struct.pack("<f", 0.0)

    def test_bit_exact_round_trip(self, tmp_path, rng):
        m = rng.standard_normal((50, 768)).astype(np.float32)
        write_matrix(tmp_path / "m.ftrx", m)
        back = read_matrix(tmp_path / "m.ftrx")
        assert back.tobytes() == m.tobytes()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 20), st.integers(1, 20))
    def test_size_formula(self, rows, cols):
        import tempfile

        with tempfile.TemporaryDirectory() as d:
            write_matrix(f"{d}/m.ftrx", np.ones((rows, cols), dtype=np.float32))
            with open(f"{d}/m.ftrx", "rb") as fh:
                assert len(fh.read()) == 12 + 4 * rows * cols

    def test_zero_cols(self, tmp_path):
        with pytest.raises(FormatError):
            write_matrix(tmp_path / "m.ftrx", np.zeros((3, 0)))
        (tmp_path / "z.ftrx").write_bytes(b"FTRX" + struct.pack("<II", 3, 0))
        with pytest.raises(FormatError):
            read_matrix(tmp_path / "z.ftrx")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "m.ftrx").write_bytes(b"XRTF" + struct.pack("<II", 1, 1) + bytes(4))
        with pytest.raises(FormatError, match="magic"):
            read_matrix(tmp_path / "m.ftrx")

    def test_truncated(self, tmp_path):
        write_matrix(tmp_path / "m.ftrx", np.ones((4, 4)))
        (tmp_path / "m.ftrx").write_bytes((tmp_path / "m.ftrx").read_bytes()[:-3])
        with pytest.raises(FormatError):
            read_matrix(tmp_path / "m.ftrx")


class TestLoadUtterances:
    def test_aligned_streams(self, small_corpus):
        utts = load_utterances(str(small_corpus / "train.jsonl"))
        for u in utts:
            assert isinstance(u, Utterance)
            assert len(u.ssl) == len(u.wav) and u.wav.shape[1] == 18
            assert u.ssl.dtype == np.float32

    def test_ssl_only(self, small_corpus):
        utts = load_utterances(str(small_corpus / "val.jsonl"), with_wavelet=False)
        assert all(u.wav is None for u in utts)

    def test_entry_attributes_forwarded(self, small_corpus):
        u = load_utterances(str(small_corpus / "val.jsonl"))[0]
        assert u.dataset == u.entry.dataset and u.label in (0, 1)
