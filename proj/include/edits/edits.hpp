#pragma once

#include "edits/core/edb.hpp"
#include "edits/core/manifest.hpp"
#include "edits/core/rng.hpp"
#include "edits/core/types.hpp"
#include "edits/gsq.hpp"
#include "edits/cluster.hpp"
#include "edits/lsa.hpp"
#include "edits/prompts.hpp"
#include "edits/clients/models.hpp"
#include "edits/clients/mock.hpp"
#include "edits/clients/http.hpp"
#include "edits/pipeline/ablate.hpp"
#include "edits/pipeline/metrics.hpp"
#include "edits/pipeline/run.hpp"
#include "edits/pipeline/toy_corpus.hpp"
