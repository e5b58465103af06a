#pragma once

#include <rrcif/error.hpp>
#include <rrcif/evaluation.hpp>
#include <rrcif/fusion.hpp>
#include <rrcif/pipeline.hpp>
#include <rrcif/preprocess.hpp>
#include <rrcif/riv.hpp>
#include <rrcif/signal_io.hpp>
#include <rrcif/spectral.hpp>
