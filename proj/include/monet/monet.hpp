#pragma once

#include "monet/data/clevr.hpp"
#include "monet/data/png_io.hpp"
#include "monet/data/source.hpp"
#include "monet/data/sprites.hpp"
#include "monet/evaluation/ablation.hpp"
#include "monet/evaluation/traversal.hpp"
#include "monet/model.hpp"
#include "monet/training/run_dir.hpp"
