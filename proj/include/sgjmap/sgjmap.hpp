#pragma once

// Core library. The HTTP service lives in sgjmap/service.hpp and is not
// pulled in here.
#include "sgjmap/audio_io.hpp"
#include "sgjmap/corpus.hpp"
#include "sgjmap/error.hpp"
#include "sgjmap/eval.hpp"
#include "sgjmap/fft.hpp"
#include "sgjmap/gain.hpp"
#include "sgjmap/metrics.hpp"
#include "sgjmap/noise_vad.hpp"
#include "sgjmap/pipeline.hpp"
#include "sgjmap/stft.hpp"
