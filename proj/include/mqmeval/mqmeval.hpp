#pragma once

#include "mqmeval/error.hpp"
#include "mqmeval/text.hpp"
#include "mqmeval/random.hpp"
#include "mqmeval/types.hpp"
#include "mqmeval/scoring.hpp"
#include "mqmeval/parsing.hpp"
#include "mqmeval/prompting.hpp"
#include "mqmeval/corpus.hpp"
#include "mqmeval/gateway.hpp"
#include "mqmeval/metaeval.hpp"
#include "mqmeval/report.hpp"
#include "mqmeval/config.hpp"
#include "mqmeval/pipeline.hpp"
