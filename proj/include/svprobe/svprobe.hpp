#pragma once

// Layer-weighted linear probing of frozen self-supervised audio features for
// singing voice tasks.

#include <svprobe/audio.hpp>
#include <svprobe/error.hpp>
#include <svprobe/metrics.hpp>
#include <svprobe/pipeline.hpp>
#include <svprobe/probe.hpp>
#include <svprobe/random.hpp>
#include <svprobe/synthetic.hpp>
#include <svprobe/tensor.hpp>
#include <svprobe/transcribe.hpp>
