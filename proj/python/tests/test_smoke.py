# Copyright 2026 The AVSepChain Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


import math

import numpy as np
import pytest

import avsepchain as av


def test_worked_si_snr_value():
    loss = av.si_snr_loss(np.array([1.0, -1.0, 0.0]), np.array([1.0, 0.0, -1.0]))
    assert loss == pytest.approx(10 * math.log10(3), abs=1e-6)


def test_si_snr_scale_invariance():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(800)
    e = u + rng.standard_normal(800)
    base = av.si_snr_loss(u, e)
    assert abs(av.si_snr_loss(u, 7.0 * e) - base) < 1e-6
    assert abs(av.si_snr_loss(0.2 * u, e) - base) < 1e-6


def test_hinge_and_improvement():
    assert av.matching_hinge(0.3, 1.0, 0.5) == 0.0
    assert av.matching_hinge(0.9, 0.2, 0.5) == pytest.approx(1.2)
    rng = np.random.default_rng(1)
    s = rng.standard_normal(1000)
    mix = s + rng.standard_normal(1000)
    assert av.si_snri(mix, mix, s) == 0.0
    assert av.sdri(mix, mix, s) == 0.0


def test_chunk_round_trip():
    rng = np.random.default_rng(2)
    feat = rng.standard_normal((5, 93))
    data, n = av.chunk(feat, 10)
    assert data.shape == (5, 10 * n)
    back = av.unchunk(data, 10, n, 93)
    np.testing.assert_array_equal(back, feat)
    with pytest.raises(av.AVSepError):
        av.chunk(feat, 7)


def test_log_mel_shape():
    t = np.arange(32000) / av.SAMPLE_RATE
    mel = av.log_mel(np.sin(2 * np.pi * 1000 * t))
    assert mel.shape == (80, 200)
    assert np.isfinite(mel).all()


def test_config_presets_and_errors():
    text = av.config_text("toy")
    assert "separator.n_channels = 64" in text
    assert av.validate_config(text) == text
    with pytest.raises(av.AVSepError):
        av.validate_config("no_such_key = 1\n")
    with pytest.raises(av.AVSepError):
        av.config_text("huge")


def test_corpus_train_evaluate_separate(tmp_path):
    n = av.gen_corpus(tmp_path / "corpus", seed=3, speakers=4, n_train=4, n_valid=2, n_test=2)
    assert n == 8
    manifest = tmp_path / "corpus" / "manifest.jsonl"
    base = av.evaluate_baseline("identity", manifest)
    assert base["mean_si_snri"] == 0.0
    assert len(base["rows"]) == 2
    oracle = av.evaluate_baseline("oracle", manifest)
    assert oracle["mean_si_snri"] == 30.0

    cfg = (
        av.config_text("toy")
        .replace("separator.n_channels = 64", "separator.n_channels = 16")
        .replace("max_steps = 0", "max_steps = 2")
    )
    res = av.train(cfg, manifest, tmp_path / "run")
    assert res["steps"] == 2
    assert all(math.isfinite(x) for x in res["step_losses"])
    ckpt = tmp_path / "run" / "best.ckpt"
    rep = av.evaluate(ckpt, manifest, "test")
    assert len(rep["rows"]) == 2

    rng = np.random.default_rng(4)
    out = av.separate(ckpt, 0.1 * rng.standard_normal(32000), [i % 12 for i in range(50)])
    assert out.shape == (32000,)
    with pytest.raises(av.AVSepError):
        av.separate(ckpt, np.zeros(32000), [0] * 10)
