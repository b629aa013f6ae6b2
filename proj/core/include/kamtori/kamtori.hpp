#pragma once

#include "kamtori/cohomology.hpp"
#include "kamtori/errors.hpp"
#include "kamtori/fields.hpp"
#include "kamtori/fourier.hpp"
#include "kamtori/geometry.hpp"
#include "kamtori/io.hpp"
#include "kamtori/parallel.hpp"
#include "kamtori/splitting.hpp"
#include "kamtori/torus.hpp"
#include "kamtori/whisker.hpp"
