# Copyright 2026 The KGS-GCN Authors
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

"""Python bindings for the kgs skeleton splatting toolkit."""

from ._kgs import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    KgsError,
    MatrixError,
    ParseError,
    SkeletonSequence,
    bhattacharyya_distance,
    covariance,
    default_config,
    evaluate,
    generate_task,
    gradient_check,
    lambda_schedule,
    load_sequence,
    lr_schedule,
    parse_sequence,
    prior_adjacency,
    render,
    sequence_from_array,
    synth,
    train,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "KgsError",
    "MatrixError",
    "ParseError",
    "SkeletonSequence",
    "bhattacharyya_distance",
    "covariance",
    "default_config",
    "evaluate",
    "generate_task",
    "gradient_check",
    "lambda_schedule",
    "load_sequence",
    "lr_schedule",
    "parse_sequence",
    "prior_adjacency",
    "render",
    "sequence_from_array",
    "synth",
    "train",
]
