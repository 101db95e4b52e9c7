# Copyright (c) 2026 The kwshand Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Speech-command recognition for prosthetic-hand control."""

import json

from ._kwshand import (
    CLASS_NAMES,
    SAMPLE_RATE,
    WINDOW_SAMPLES,
    KwsError,
    Model,
    compute_features,
    decision_json,
    default_gesture_table,
    encode_dac_frames,
    read_wav,
    stft_power,
    to_window,
    trajectory,
    trajectory_to_codes,
    write_wav,
)
from ._kwshand import stream_decode as _stream_decode

__all__ = [
    "CLASS_NAMES",
    "SAMPLE_RATE",
    "WINDOW_SAMPLES",
    "KwsError",
    "Model",
    "compute_features",
    "decide",
    "decision_json",
    "default_gesture_table",
    "encode_dac_frames",
    "read_wav",
    "stft_power",
    "stream_decode",
    "to_window",
    "trajectory",
    "trajectory_to_codes",
    "write_wav",
]


def decide(label, prob, t_ms=1000, table=None):
    """Decision for a class as a dict (trajectory None and no frames for unknown)."""
    return json.loads(decision_json(label, prob, t_ms, table))


def stream_decode(model, samples, hop_ms=500, threshold=0.7, refractory_ms=1000, table=None):
    """Decisions from sliding one-second windows over a long recording."""
    lines = _stream_decode(model, samples, hop_ms, threshold, refractory_ms, table)
    return [json.loads(line) for line in lines]
