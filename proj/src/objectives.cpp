#include "equivae/objectives.hpp"

#include <cmath>
#include <numbers>

namespace equivae {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

void check_simplex(const std::vector<double>& probs, const char* what) {
    double total = 0.0;
    for (double p : probs) {
        if (p < 0.0) {
            throw ContractError(std::string(what) + ": negative probability");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ContractError(std::string(what) + ": probabilities sum to " +
                            std::to_string(total));
    }
}

Tensor recon_loglik(const EquiVae& model, const Tensor& params, const Tensor& target) {
    if (model.config().likelihood == Likelihood::Bernoulli) {
        return bernoulli_loglik(params, target);
    }
    return gaussian_loglik(params, model.gaussian_log_var(), target);
}

Tensor zero_scalar() {
    return Tensor::scalar(0.0);
}

}  // namespace

Tensor bernoulli_loglik(const Tensor& means, const Tensor& target) {
    if (means.shape() != target.shape()) {
        throw ShapeError("bernoulli_loglik: means " + shape_str(means.shape()) +
                         " vs target " + shape_str(target.shape()));
    }
    Tensor one = Tensor::scalar(1.0);
    Tensor hit = mul(target, log_guarded(means));
    Tensor miss = mul(sub(one, target), log_guarded(sub(one, means)));
    return sum_per_row(add(hit, miss));
}

Tensor gaussian_loglik(const Tensor& means, const Tensor& log_var, const Tensor& target) {
    if (means.shape() != target.shape()) {
        throw ShapeError("gaussian_loglik: means " + shape_str(means.shape()) + " vs target " +
                         shape_str(target.shape()));
    }
    Tensor residual_sq = square(sub(target, means));
    Tensor precision = exp(negate(log_var));
    Tensor per_pixel = add(add(mul(residual_sq, precision), log_var),
                           Tensor::scalar(kLog2Pi));
    return mul(sum_per_row(per_pixel), Tensor::scalar(-0.5));
}

Tensor kl_gaussian_to_unit(const GaussianPosterior& posterior) {
    for (double s : posterior.sigma.values()) {
        if (s <= 0.0) {
            throw DomainError("kl_gaussian_to_unit: sigma must be positive");
        }
    }
    Tensor mu_sq = square(posterior.mu);
    Tensor sigma_sq = square(posterior.sigma);
    Tensor terms = sub(sub(add(mu_sq, sigma_sq), Tensor::scalar(1.0)), log(sigma_sq));
    return mul(sum_per_row(terms), Tensor::scalar(0.5));
}

Tensor kl_categorical(const Tensor& q, const ClassPrior& prior) {
    if (q.ndim() != 2 || q.extent(1) != static_cast<int64_t>(prior.probs.size())) {
        throw ShapeError("kl_categorical: q " + shape_str(q.shape()) + " vs prior of " +
                         std::to_string(prior.probs.size()));
    }
    check_simplex(prior.probs, "prior");
    const int64_t batch = q.extent(0);
    const int64_t k = q.extent(1);
    for (int64_t b = 0; b < batch; ++b) {
        double total = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            const double qv = q.values()[static_cast<size_t>(b * k + j)];
            if (qv < 0.0) {
                throw ContractError("kl_categorical: negative q entry");
            }
            if (qv > 1e-12 && prior.probs[static_cast<size_t>(j)] == 0.0) {
                throw DomainError("kl_categorical: q puts mass on a zero-prior class " +
                                  std::to_string(j));
            }
            total += qv;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw ContractError("kl_categorical: q row sums to " + std::to_string(total));
        }
    }
    // log prior as a constant; zero-prior entries carry q == 0, so the value
    // placed there never contributes.
    std::vector<double> log_p(prior.probs.size(), 0.0);
    for (size_t j = 0; j < prior.probs.size(); ++j) {
        log_p[j] = prior.probs[j] > 0.0 ? std::log(prior.probs[j]) : 0.0;
    }
    Tensor log_prior = Tensor::from_values(Shape{k}, std::move(log_p));
    Tensor terms = mul(q, sub(log_guarded(q), log_prior));
    return sum_per_row(terms);
}

ElboTerms labelled_elbo_given_r(const EquiVae& model, const Tensor& x,
                                const std::vector<int>& labels, const Tensor& r,
                                const Tensor& eps, const ClassPrior& prior,
                                bool classifier_term_on, bool training, Rng* dropout_rng) {
    const int64_t batch = x.extent(0);
    if (static_cast<int64_t>(labels.size()) != batch) {
        throw ShapeError("labelled_elbo: one label per example required");
    }
    check_simplex(prior.probs, "prior");

    GaussianPosterior posterior = model.encode_equivariant(r, x);
    Tensor v = EquiVae::reparameterize(posterior, eps);
    Tensor params = model.decode(r, v);

    ElboTerms terms;
    terms.count = batch;
    terms.reconstruction = reduce_sum(recon_loglik(model, params, x), {0});
    terms.kl_v = reduce_sum(kl_gaussian_to_unit(posterior), {0});

    double log_prior_sum = 0.0;
    for (int y : labels) {
        if (y < 0 || y >= static_cast<int>(prior.probs.size())) {
            throw ContractError("label " + std::to_string(y) + " outside the prior support");
        }
        const double p = prior.probs[static_cast<size_t>(y)];
        if (p <= 0.0) {
            throw DomainError("label " + std::to_string(y) + " has zero prior probability");
        }
        log_prior_sum += std::log(p);
    }
    terms.log_prior_y = Tensor::scalar(log_prior_sum);
    terms.kl_y = zero_scalar();

    if (classifier_term_on) {
        Tensor q = model.label_posterior(x, training, dropout_rng);
        terms.classifier_term = reduce_sum(log_guarded(gather_cols(q, labels)), {0});
    } else {
        terms.classifier_term = zero_scalar();
    }

    terms.total = add(add(sub(terms.reconstruction, terms.kl_v), terms.log_prior_y),
                      terms.classifier_term);
    return terms;
}

ElboTerms labelled_elbo(const EquiVae& model, const LabelledBatch& batch, const Tensor& eps,
                        const ClassPrior& prior, bool classifier_term_on, bool training,
                        Rng* dropout_rng) {
    // Eq. 2 contract: the example itself never appears in its own
    // complementary set.
    size_t offset = 0;
    for (size_t i = 0; i < batch.segments.size(); ++i) {
        for (int64_t j = 0; j < batch.segments[i]; ++j) {
            if (batch.comp_ids[offset + static_cast<size_t>(j)] == batch.ids[i]) {
                throw ContractError("complementary set of example " +
                                    std::to_string(batch.ids[i]) + " contains the example");
            }
        }
        offset += static_cast<size_t>(batch.segments[i]);
    }
    Tensor r = model.encode_invariant(batch.comp, batch.segments);
    return labelled_elbo_given_r(model, batch.x, batch.labels, r, eps, prior,
                                 classifier_term_on, training, dropout_rng);
}

ElboTerms unlabelled_elbo_given_q(const EquiVae& model, const Tensor& x, const Tensor& q,
                                  const std::vector<Tensor>& r_per_class,
                                  const std::vector<Tensor>& eps_per_class,
                                  const ClassPrior& prior) {
    const int64_t batch = x.extent(0);
    const int64_t k = static_cast<int64_t>(prior.probs.size());
    if (q.ndim() != 2 || q.extent(0) != batch || q.extent(1) != k) {
        throw ShapeError("unlabelled_elbo: q must be [batch, classes]");
    }
    if (static_cast<int64_t>(r_per_class.size()) != k ||
        static_cast<int64_t>(eps_per_class.size()) != k) {
        throw ShapeError("unlabelled_elbo: need r and eps for every class");
    }

    Tensor weighted_recon;
    Tensor weighted_klv;
    for (int64_t y = 0; y < k; ++y) {
        const Tensor& r = r_per_class[static_cast<size_t>(y)];
        GaussianPosterior posterior = model.encode_equivariant(r, x);
        Tensor v = EquiVae::reparameterize(posterior, eps_per_class[static_cast<size_t>(y)]);
        Tensor params = model.decode(r, v);
        Tensor recon = recon_loglik(model, params, x);      // [B]
        Tensor klv = kl_gaussian_to_unit(posterior);        // [B]
        Tensor w = gather_cols(q, std::vector<int>(static_cast<size_t>(batch),
                                                   static_cast<int>(y)));
        Tensor wr = mul(w, recon);
        Tensor wk = mul(w, klv);
        weighted_recon = y == 0 ? wr : add(weighted_recon, wr);
        weighted_klv = y == 0 ? wk : add(weighted_klv, wk);
    }

    ElboTerms terms;
    terms.count = batch;
    terms.reconstruction = reduce_sum(weighted_recon, {0});
    terms.kl_v = reduce_sum(weighted_klv, {0});
    terms.log_prior_y = zero_scalar();
    terms.kl_y = reduce_sum(kl_categorical(q, prior), {0});
    terms.classifier_term = zero_scalar();
    terms.total = sub(sub(terms.reconstruction, terms.kl_v), terms.kl_y);
    return terms;
}

ElboTerms unlabelled_elbo(const EquiVae& model, const UnlabelledBatch& batch,
                          const Dataset& dataset, const ClassPool& pools,
                          const std::vector<int64_t>& m_per_class,
                          const std::vector<Tensor>& eps_per_class, const ClassPrior& prior,
                          Rng& comp_rng, bool training, Rng* dropout_rng) {
    const int64_t k = static_cast<int64_t>(prior.probs.size());
    if (static_cast<int64_t>(m_per_class.size()) != k) {
        throw ShapeError("unlabelled_elbo: need an m for every class");
    }
    const int64_t rows = batch.x.extent(0);

    std::vector<Tensor> r_per_class;
    r_per_class.reserve(static_cast<size_t>(k));
    for (int64_t y = 0; y < k; ++y) {
        if (pools.members(static_cast<int>(y)).empty()) {
            throw ContractError("class " + std::to_string(y) + " has an empty labelled pool");
        }
        auto draw = sample_complementary(pools, static_cast<int>(y), std::nullopt,
                                         m_per_class[static_cast<size_t>(y)], comp_rng);
        Tensor r1 = model.encode_invariant(stack_images(dataset, draw),
                                           {static_cast<int64_t>(draw.size())});
        r_per_class.push_back(tile_rows(r1, rows));
    }
    Tensor q = model.label_posterior(batch.x, training, dropout_rng);
    return unlabelled_elbo_given_q(model, batch.x, q, r_per_class, eps_per_class, prior);
}

SemiObjective semi_supervised_objective(const EquiVae& model,
                                        const std::optional<LabelledBatch>& labelled,
                                        const Tensor& labelled_eps,
                                        const std::optional<UnlabelledBatch>& unlabelled,
                                        const Dataset& dataset, const ClassPool& pools,
                                        const std::vector<int64_t>& m_per_class,
                                        const std::vector<Tensor>& eps_per_class,
                                        const ClassPrior& prior, Rng& comp_rng, bool training,
                                        Rng* dropout_rng) {
    if (!labelled && !unlabelled) {
        throw ContractError("semi objective needs at least one non-empty batch");
    }
    SemiObjective out;
    if (unlabelled) {
        out.unlabelled = unlabelled_elbo(model, *unlabelled, dataset, pools, m_per_class,
                                         eps_per_class, prior, comp_rng, training, dropout_rng);
    }
    if (labelled) {
        out.labelled = labelled_elbo(model, *labelled, labelled_eps, prior,
                                     /*classifier_term_on=*/true, training, dropout_rng);
    }
    if (labelled && unlabelled) {
        out.total = add(out.unlabelled->total, out.labelled->total);
    } else if (labelled) {
        out.total = out.labelled->total;
    } else {
        out.total = out.unlabelled->total;
    }
    return out;
}

}  // namespace equivae
