// SPDX-License-Identifier: Apache-2.0
#pragma once

// Everything except the HTTP transport, which needs the socket layer and is
// included on its own from unlearn/http_transport.hpp.

#include "unlearn/clients.hpp"
#include "unlearn/config.hpp"
#include "unlearn/error.hpp"
#include "unlearn/io.hpp"
#include "unlearn/losses.hpp"
#include "unlearn/metrics.hpp"
#include "unlearn/neighborset.hpp"
#include "unlearn/ports.hpp"
#include "unlearn/svg.hpp"
#include "unlearn/textsim.hpp"
#include "unlearn/toylab.hpp"
