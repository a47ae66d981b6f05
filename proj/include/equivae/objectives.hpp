#pragma once

#include <optional>

#include "equivae/data.hpp"
#include "equivae/model.hpp"

namespace equivae {

/// Decomposition of one objective evaluation, each term summed over the
/// batch. Always total = reconstruction - kl_v + log_prior_y - kl_y +
/// classifier_term, with the inapplicable fields exactly zero (kl_y on the
/// labelled branch, log_prior_y and classifier_term on the unlabelled one).
struct ElboTerms {
    Tensor reconstruction;
    Tensor kl_v;
    Tensor log_prior_y;
    Tensor kl_y;
    Tensor classifier_term;
    Tensor total;
    int64_t count = 0;  // examples summed in
};

/// Per-example Bernoulli log-likelihood: sum over pixels of
/// t*log(m) + (1-t)*log(1-m), with the guarded log.
Tensor bernoulli_loglik(const Tensor& means, const Tensor& target);

/// Per-example Gaussian log-likelihood with a shared scalar log-variance.
Tensor gaussian_loglik(const Tensor& means, const Tensor& log_var, const Tensor& target);

/// Per-example KL[N(mu, sigma^2 I) || N(0, I)]
///   = 1/2 sum_d (mu_d^2 + sigma_d^2 - 1 - log sigma_d^2).
Tensor kl_gaussian_to_unit(const GaussianPosterior& posterior);

/// Per-example KL[q(y|x) || p(y)] with the 0*log0 := 0 convention. Throws
/// DomainError when some q_y > 0 sits on a zero-probability prior entry.
Tensor kl_categorical(const Tensor& q, const ClassPrior& prior);

/// Labelled bound with the class latent supplied directly; the sampling
/// wrappers and the oracle tests both go through here.
ElboTerms labelled_elbo_given_r(const EquiVae& model, const Tensor& x,
                                const std::vector<int>& labels, const Tensor& r,
                                const Tensor& eps, const ClassPrior& prior,
                                bool classifier_term_on, bool training, Rng* dropout_rng);

/// Single-sample estimate of the labelled bound. Audits that no example's
/// complementary set contains the example itself.
ElboTerms labelled_elbo(const EquiVae& model, const LabelledBatch& batch, const Tensor& eps,
                        const ClassPrior& prior, bool classifier_term_on, bool training,
                        Rng* dropout_rng);

/// Unlabelled bound with the label posterior and per-class latents supplied
/// directly. r_per_class holds K tensors of shape [B, D_r]; eps_per_class K
/// tensors of shape [B, D_v].
ElboTerms unlabelled_elbo_given_q(const EquiVae& model, const Tensor& x, const Tensor& q,
                                  const std::vector<Tensor>& r_per_class,
                                  const std::vector<Tensor>& eps_per_class,
                                  const ClassPrior& prior);

/// Exact enumeration over classes: for each candidate class, r_y comes from
/// one m-sized draw out of that class's labelled pool (nothing is excluded;
/// the batch is unlabelled and cannot be in the pools).
ElboTerms unlabelled_elbo(const EquiVae& model, const UnlabelledBatch& batch,
                          const Dataset& dataset, const ClassPool& pools,
                          const std::vector<int64_t>& m_per_class,
                          const std::vector<Tensor>& eps_per_class, const ClassPrior& prior,
                          Rng& comp_rng, bool training, Rng* dropout_rng);

struct SemiObjective {
    std::optional<ElboTerms> labelled;
    std::optional<ElboTerms> unlabelled;
    Tensor total;
};

/// Sum of the two branch objectives; at least one batch must be present.
/// The classifier term is active on the labelled branch.
SemiObjective semi_supervised_objective(const EquiVae& model,
                                        const std::optional<LabelledBatch>& labelled,
                                        const Tensor& labelled_eps,
                                        const std::optional<UnlabelledBatch>& unlabelled,
                                        const Dataset& dataset, const ClassPool& pools,
                                        const std::vector<int64_t>& m_per_class,
                                        const std::vector<Tensor>& eps_per_class,
                                        const ClassPrior& prior, Rng& comp_rng, bool training,
                                        Rng* dropout_rng);

}  // namespace equivae
