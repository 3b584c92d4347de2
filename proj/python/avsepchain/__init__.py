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

"""Audio-visual target speech extraction."""

from avsepchain._core import (
    SAMPLE_RATE,
    AVSepError,
    chunk,
    config_text,
    evaluate,
    evaluate_baseline,
    gen_corpus,
    log_mel,
    matching_hinge,
    sdri,
    separate,
    si_snr_loss,
    si_snri,
    train,
    unchunk,
    validate_config,
)

__all__ = [
    "SAMPLE_RATE",
    "AVSepError",
    "chunk",
    "config_text",
    "evaluate",
    "evaluate_baseline",
    "gen_corpus",
    "log_mel",
    "matching_hinge",
    "sdri",
    "separate",
    "si_snr_loss",
    "si_snri",
    "train",
    "unchunk",
    "validate_config",
]
