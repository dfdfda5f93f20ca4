#pragma once

#include "gdml/baselines.hpp"
#include "gdml/comm/collectives.hpp"
#include "gdml/comm/transport.hpp"
#include "gdml/costmodel.hpp"
#include "gdml/data.hpp"
#include "gdml/fadl.hpp"
#include "gdml/harness.hpp"
#include "gdml/loss.hpp"
#include "gdml/optim.hpp"
#include "gdml/report.hpp"
