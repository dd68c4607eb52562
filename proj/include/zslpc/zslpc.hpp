// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "zslpc/class_lists.hpp"
#include "zslpc/dataset_cache.hpp"
#include "zslpc/encoder.hpp"
#include "zslpc/error.hpp"
#include "zslpc/evaluation.hpp"
#include "zslpc/mesh.hpp"
#include "zslpc/point_cloud.hpp"
#include "zslpc/rng.hpp"
#include "zslpc/semantic_embeddings.hpp"
#include "zslpc/split_manifest.hpp"
#include "zslpc/training.hpp"
#include "zslpc/zsl_inference.hpp"
