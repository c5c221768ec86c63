#pragma once

#include "latent_imh/analytics.hpp"
#include "latent_imh/experiment.hpp"
#include "latent_imh/gaussian_posterior.hpp"
#include "latent_imh/imh.hpp"
#include "latent_imh/inverse_problem.hpp"
#include "latent_imh/linear_map.hpp"
#include "latent_imh/mala.hpp"
#include "latent_imh/metrics.hpp"
#include "latent_imh/nuts.hpp"
#include "latent_imh/pcg.hpp"
#include "latent_imh/prior.hpp"
#include "latent_imh/problems/diagonal.hpp"
#include "latent_imh/problems/graph_laplacian.hpp"
#include "latent_imh/problems/helmholtz.hpp"
#include "latent_imh/randomized_cholesky.hpp"
#include "latent_imh/reparameterization.hpp"
#include "latent_imh/rng.hpp"
#include "latent_imh/sample_batch.hpp"
#include "latent_imh/target.hpp"
#include "latent_imh/two_stage.hpp"
#include "latent_imh/types.hpp"
