// Acceptance suite: one line per criterion, [PASS]/[FAIL]/[SKIP], nonzero
// exit when anything fails. Run from the repository root so the bundled
// dataset under data/ resolves; `equivae_acceptance --only N` runs one.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <vector>

#include "equivae/commands.hpp"
#include "equivae/idx.hpp"
#include "equivae/objectives.hpp"

using namespace equivae;

namespace {

namespace fs = std::filesystem;

struct Failure {
    std::string message;
};

void require(bool condition, const std::string& message) {
    if (!condition) {
        throw Failure{message};
    }
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

// ---- toy fixtures -------------------------------------------------------

ModelConfig toy_arch(int classes) {
    ModelConfig config;
    config.backbone = BackboneKind::Mlp;
    config.mlp_hidden = {12};
    config.channels = 1;
    config.height = 4;
    config.width = 4;
    config.classes = classes;
    config.d_r = 2;
    config.d_v = 2;
    config.head_widths = {8, 6};
    config.decoder_widths = {6, 10};
    config.classifier_widths = {8, 6};
    config.r_proj_width = 6;
    return config;
}

SyntheticData toy_set(int classes, int64_t train, int64_t test, uint64_t seed) {
    SyntheticSpec spec;
    spec.classes = classes;
    spec.image_size = 4;
    spec.train = train;
    spec.validation = 0;
    spec.test = test;
    spec.rotation_deg = 20.0;
    spec.translate_px = 1;
    spec.intensity_lo = 0.9;
    spec.intensity_hi = 1.1;
    spec.seed = seed;
    return synth_generate(spec);
}

Tensor normal_tensor(Rng& rng, int64_t rows, int64_t cols) {
    std::vector<double> v(static_cast<size_t>(rows * cols));
    for (double& x : v) {
        x = rng.normal();
    }
    return Tensor::from_values({rows, cols}, std::move(v));
}

double fd_check(std::vector<Tensor> params, const std::function<Tensor()>& loss_fn,
                double h) {
    Tensor loss = loss_fn();
    backward(loss);
    std::vector<std::vector<double>> autodiff;
    for (auto& p : params) {
        autodiff.push_back(p.has_grad()
                               ? p.grad()
                               : std::vector<double>(static_cast<size_t>(p.size()), 0.0));
        p.clear_grad();
    }
    double worst = 0.0;
    NoGradGuard no_grad;
    for (size_t i = 0; i < params.size(); ++i) {
        auto& values = params[i].mutable_values();
        for (size_t j = 0; j < values.size(); ++j) {
            const double orig = values[j];
            values[j] = orig + h;
            const double up = loss_fn().item();
            values[j] = orig - h;
            const double down = loss_fn().item();
            values[j] = orig;
            const double fd = (up - down) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(autodiff[i][j]), 1e-2});
            worst = std::max(worst, std::abs(fd - autodiff[i][j]) / denom);
        }
    }
    return worst;
}

std::vector<Tensor> trainable(const EquiVae& model, const std::vector<std::string>& groups) {
    std::vector<Tensor> out;
    for (const auto& name : model.parameter_names(groups)) {
        out.push_back(model.params().get(name));
    }
    return out;
}

double gauss_log_density(double v, double mu, double sigma) {
    const double z = (v - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// ---- criteria -----------------------------------------------------------

// 1. central finite differences over the primitives and all three
//    objectives on the toy model, under a minute.
void criterion_gradients() {
    const double start = now_seconds();
    Rng rng(101);
    double worst = 0.0;

    {  // primitives on random small tensors
        auto rt = [&](const Shape& s, double lo, double hi) {
            std::vector<double> v(static_cast<size_t>(shape_size(s)));
            for (double& x : v) {
                x = rng.uniform(lo, hi);
            }
            return Tensor::from_values(s, std::move(v), true);
        };
        Tensor a = rt({3, 4}, -1, 1);
        Tensor b = rt({4, 2}, -1, 1);
        worst = std::max(worst, fd_check({a, b}, [&] {
                             return sum_all(square(matmul(a, b)));
                         }, 1e-5));
        Tensor pos = rt({3, 4}, 0.3, 2.0);
        Tensor suf = rt({4}, 0.3, 2.0);
        worst = std::max(worst, fd_check({pos, suf}, [&] {
                             return sum_all(div(pos, suf));
                         }, 1e-5));
        worst = std::max(worst, fd_check({pos, suf}, [&] {
                             return sum_all(mul(sub(pos, suf), add(pos, suf)));
                         }, 1e-5));
        worst = std::max(worst, fd_check({pos}, [&] {
                             return sum_all(exp(negate(log(pos))));
                         }, 1e-5));
        worst = std::max(worst, fd_check({pos}, [&] {
                             return sum_all(log_guarded(sigmoid(square(pos))));
                         }, 1e-5));
        Tensor away = rt({3, 3}, 0.5, 1.5);
        worst = std::max(worst, fd_check({away}, [&] {
                             return sum_all(relu(away));
                         }, 1e-5));
        worst = std::max(worst, fd_check({a}, [&] {
                             return sum_all(square(reduce_mean(a, {1})));
                         }, 1e-5));
        worst = std::max(worst, fd_check({a}, [&] {
                             return sum_all(square(reduce_sum(a, {0})));
                         }, 1e-5));
        worst = std::max(worst, fd_check({a}, [&] {
                             return sum_all(square(softmax_rows(a)));
                         }, 1e-5));
        Tensor row = rt({1, 3}, -1, 1);
        worst = std::max(worst, fd_check({a, row}, [&] {
                             return sum_all(square(concat_cols(a, tile_rows(row, 3))));
                         }, 1e-5));
        worst = std::max(worst, fd_check({a}, [&] {
                             return sum_all(square(gather_cols(a, {0, 2, 1})));
                         }, 1e-5));
        Tensor img = rt({1, 2, 4, 4}, -1, 1);
        Tensor kernel = rt({2, 2, 3, 3}, -0.5, 0.5);
        Tensor bias = rt({2}, -0.5, 0.5);
        worst = std::max(worst, fd_check({img, kernel, bias}, [&] {
                             return sum_all(square(conv2d(img, kernel, bias, 2)));
                         }, 1e-5));
        Tensor bias_c = rt({2}, -0.5, 0.5);
        worst = std::max(worst, fd_check({img, bias_c}, [&] {
                             return sum_all(
                                 square(conv2d_transpose(img, kernel, bias_c, 2)));
                         }, 1e-5));
        // stop_gradient: frozen-factor product rule, exact
        Tensor x = rt({3}, -1, 1);
        backward(sum_all(mul(x, stop_gradient(x))));
        require(x.grad() == x.values(), "stop_gradient product rule");
        x.clear_grad();
    }

    // objectives on the toy model
    SyntheticData toy = toy_set(3, 9, 3, 7);
    Rng init(102);
    EquiVae model(toy_arch(3), init);
    ClassPool pools = ClassPool::build(toy.dataset, toy.split.train_labelled);
    ClassPrior prior = empirical_prior(pools);

    Rng batch_rng(103);
    LabelledBatch lab = make_labelled_batch(
        toy.dataset, pools,
        {toy.split.train_labelled[0], toy.split.train_labelled[1]}, 2, batch_rng);
    Tensor lab_eps = normal_tensor(batch_rng, 2, 2);
    UnlabelledBatch unlab = make_unlabelled_batch(toy.dataset, toy.split.test);
    std::vector<int64_t> m_per_class{2, 1, 2};
    std::vector<Tensor> eps_per_class;
    for (int y = 0; y < 3; ++y) {
        eps_per_class.push_back(normal_tensor(batch_rng, 3, 2));
    }

    // The stop-gradient feeding the label posterior makes the full loss a
    // different function than its defined gradient for the invariant
    // parameters: finite differences see through the frozen embedding.
    // Each objective is therefore checked over every parameter across two
    // routes: the posterior-bearing route covers {cov, dec, ypost}, and a
    // route with no label-posterior path covers {inv, cov, dec}. Criterion
    // 5 separately proves the stopped path contributes exactly zero.
    auto no_ypost = trainable(model, {"inv", "cov", "dec"});
    auto with_ypost = trainable(model, {"cov", "dec", "ypost"});
    // every backward leaves gradients on all touched parameters, including
    // ones outside the list under check; scrub between routes
    auto checked = [&](const std::vector<Tensor>& params, const std::function<Tensor()>& fn) {
        for (const auto& name : model.params().names()) {
            model.params().get(name).clear_grad();
        }
        return fd_check(params, fn, 1e-5);
    };

    const double lab_err = std::max(
        checked(with_ypost, [&] {
            return labelled_elbo(model, lab, lab_eps, prior, /*classifier=*/true, false,
                                 nullptr)
                .total;
        }),
        checked(no_ypost, [&] {
            return labelled_elbo(model, lab, lab_eps, prior, /*classifier=*/false, false,
                                 nullptr)
                .total;
        }));

    // fixed simplex for the q-free route of the unlabelled bound
    Tensor fixed_q = Tensor::from_values({3, 3}, {0.5, 0.3, 0.2, 0.1, 0.6, 0.3,
                                                  0.25, 0.25, 0.5});
    std::vector<std::vector<int64_t>> comp_draws;
    {
        Rng comp(104);
        for (int y = 0; y < 3; ++y) {
            comp_draws.push_back(sample_complementary(pools, y, std::nullopt,
                                                      m_per_class[static_cast<size_t>(y)],
                                                      comp));
        }
    }
    auto unlab_given_q = [&] {
        std::vector<Tensor> r_per_class;
        for (int y = 0; y < 3; ++y) {
            Tensor r1 = model.encode_invariant(
                stack_images(toy.dataset, comp_draws[static_cast<size_t>(y)]),
                {static_cast<int64_t>(comp_draws[static_cast<size_t>(y)].size())});
            r_per_class.push_back(tile_rows(r1, 3));
        }
        return unlabelled_elbo_given_q(model, unlab.x, fixed_q, r_per_class, eps_per_class,
                                       prior)
            .total;
    };
    const double unlab_err = std::max(
        checked(with_ypost, [&] {
            Rng comp(104);
            return unlabelled_elbo(model, unlab, toy.dataset, pools, m_per_class,
                                   eps_per_class, prior, comp, false, nullptr)
                .total;
        }),
        checked(no_ypost, unlab_given_q));

    const double semi_err = std::max(
        checked(with_ypost, [&] {
            Rng comp(105);
            return semi_supervised_objective(model, lab, lab_eps, unlab, toy.dataset, pools,
                                             m_per_class, eps_per_class, prior, comp, false,
                                             nullptr)
                .total;
        }),
        checked(no_ypost, [&] {
            // same sum with both stopped paths removed
            return add(labelled_elbo(model, lab, lab_eps, prior, false, false, nullptr).total,
                       unlab_given_q());
        }));

    worst = std::max({worst, lab_err, unlab_err, semi_err});
    const double elapsed = now_seconds() - start;
    std::ostringstream detail;
    detail << "max rel err " << worst << " (labelled " << lab_err << ", unlabelled "
           << unlab_err << ", semi " << semi_err << "), " << elapsed << "s";
    require(worst < 1e-3, "gradient error too large: " + detail.str());
    require(elapsed < 60.0, "over the one-minute budget: " + detail.str());
    std::cout << "  " << detail.str() << "\n";
}

// 2. KL oracles: quadrature for the Gaussian form, direct summation for the
//    categorical one, non-negativity fuzz for both.
void criterion_kl_oracles() {
    Rng rng(111);
    for (int trial = 0; trial < 20; ++trial) {
        const double mu = rng.uniform(-3, 3);
        const double sigma = rng.uniform(0.2, 2.5);
        GaussianPosterior post{Tensor::from_values({1, 1}, {mu}),
                               Tensor::from_values({1, 1}, {sigma})};
        const double closed = kl_gaussian_to_unit(post).values()[0];

        // Simpson quadrature of q log(q/p) over a wide interval
        const double lo = mu - 12.0 * sigma - 8.0;
        const double hi = mu + 12.0 * sigma + 8.0;
        const int n = 40000;  // even
        const double h = (hi - lo) / n;
        auto f = [&](double v) {
            const double lq = gauss_log_density(v, mu, sigma);
            const double lp = gauss_log_density(v, 0.0, 1.0);
            return std::exp(lq) * (lq - lp);
        };
        double acc = f(lo) + f(hi);
        for (int i = 1; i < n; ++i) {
            acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
        }
        const double quadrature = acc * h / 3.0;
        require(std::abs(closed - quadrature) < 1e-6,
                "quadrature mismatch at mu=" + std::to_string(mu) +
                    " sigma=" + std::to_string(sigma) + ": closed " +
                    std::to_string(closed) + " vs " + std::to_string(quadrature));
    }

    // categorical: exact against direct summation
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> q(4), p(4);
        double qs = 0, ps = 0;
        for (int i = 0; i < 4; ++i) {
            q[static_cast<size_t>(i)] = -std::log(rng.uniform() + 1e-12);
            p[static_cast<size_t>(i)] = -std::log(rng.uniform() + 1e-12) + 1e-3;
            qs += q[static_cast<size_t>(i)];
            ps += p[static_cast<size_t>(i)];
        }
        for (int i = 0; i < 4; ++i) {
            q[static_cast<size_t>(i)] /= qs;
            p[static_cast<size_t>(i)] /= ps;
        }
        double direct = 0.0;
        for (int i = 0; i < 4; ++i) {
            direct += q[static_cast<size_t>(i)] *
                      std::log(q[static_cast<size_t>(i)] / p[static_cast<size_t>(i)]);
        }
        const double got =
            kl_categorical(Tensor::from_values({1, 4}, std::vector<double>(q)),
                           ClassPrior{p})
                .values()[0];
        require(std::abs(got - direct) < 1e-12,
                "kl_categorical deviates from direct summation");
    }

    // non-negativity fuzz, 10^4 cases each
    for (int trial = 0; trial < 10000; ++trial) {
        GaussianPosterior post{
            Tensor::from_values({1, 2}, {rng.uniform(-4, 4), rng.uniform(-4, 4)}),
            Tensor::from_values({1, 2}, {rng.uniform(0.05, 4), rng.uniform(0.05, 4)})};
        require(kl_gaussian_to_unit(post).values()[0] >= 0.0, "negative Gaussian KL");

        std::vector<double> q(3), p(3);
        double qs = 0, ps = 0;
        for (int i = 0; i < 3; ++i) {
            q[static_cast<size_t>(i)] = rng.uniform() + 1e-9;
            p[static_cast<size_t>(i)] = rng.uniform() + 1e-9;
            qs += q[static_cast<size_t>(i)];
            ps += p[static_cast<size_t>(i)];
        }
        for (int i = 0; i < 3; ++i) {
            q[static_cast<size_t>(i)] /= qs;
            p[static_cast<size_t>(i)] /= ps;
        }
        require(kl_categorical(Tensor::from_values({1, 3}, std::vector<double>(q)),
                               ClassPrior{p})
                        .values()[0] >= -1e-12,
                "negative categorical KL");
    }
    std::cout << "  quadrature within 1e-6 on 20 cases, exact direct sums, 2x10^4 fuzz\n";
}

// 3. single-sample ELBO is a true lower bound: the importance-weighted
//    evidence estimate stays above the averaged ELBO minus three standard
//    errors.
void criterion_lower_bound() {
    const double start = now_seconds();
    SyntheticData toy = toy_set(2, 8, 1, 17);
    Rng init(112);
    EquiVae model(toy_arch(2), init);
    ClassPool pools = ClassPool::build(toy.dataset, toy.split.train_labelled);
    ClassPrior prior = empirical_prior(pools);

    // brief training so q and the decoder are non-trivial; the bound should
    // hold at any parameter values, this just makes the gap visible
    {
        Adam adam(AdamConfig{}, model.parameter_names({"inv", "cov", "dec"}));
        Rng step_rng(195);
        for (int step = 0; step < 150; ++step) {
            LabelledBatch batch = make_labelled_batch(toy.dataset, pools,
                                                      toy.split.train_labelled, 2, step_rng);
            Tensor eps = normal_tensor(step_rng, static_cast<int64_t>(batch.ids.size()), 2);
            ElboTerms terms = labelled_elbo(model, batch, eps, prior, false, true, nullptr);
            backward(negate(terms.total));
            adam.step(model.params());
            for (const auto& name : model.params().names()) {
                model.params().get(name).clear_grad();
            }
        }
    }

    const int64_t x_id = toy.split.test[0];
    const int label = toy.dataset.by_id(x_id).label;
    Tensor x = stack_images(toy.dataset, {x_id});
    Rng comp_rng(113);
    auto draw = sample_complementary(pools, label, std::nullopt, 2, comp_rng);
    NoGradGuard no_grad;
    Tensor r = model.encode_invariant(stack_images(toy.dataset, draw), {2});
    GaussianPosterior post = model.encode_equivariant(r, x);
    const double log_prior_y = std::log(prior.probs[static_cast<size_t>(label)]);
    const double klv = kl_gaussian_to_unit(post).values()[0];

    Rng sample_rng(114);
    auto one_sample = [&](double& log_w) {
        Tensor eps = normal_tensor(sample_rng, 1, 2);
        Tensor v = EquiVae::reparameterize(post, eps);
        Tensor recon = bernoulli_loglik(model.decode(r, v), x);
        double lq = 0, lp = 0;
        for (int d = 0; d < 2; ++d) {
            const double vd = v.values()[static_cast<size_t>(d)];
            lq += gauss_log_density(vd, post.mu.values()[static_cast<size_t>(d)],
                                    post.sigma.values()[static_cast<size_t>(d)]);
            lp += gauss_log_density(vd, 0.0, 1.0);
        }
        log_w = recon.values()[0] + lp + log_prior_y - lq;
        return recon.values()[0];
    };

    const int s_iw = 5000;
    std::vector<double> log_w(s_iw);
    for (int s = 0; s < s_iw; ++s) {
        double w;
        one_sample(w);
        log_w[static_cast<size_t>(s)] = w;
    }
    double max_w = log_w[0];
    for (double w : log_w) {
        max_w = std::max(max_w, w);
    }
    double acc = 0.0;
    for (double w : log_w) {
        acc += std::exp(w - max_w);
    }
    const double iw_estimate = max_w + std::log(acc / s_iw);

    const int s_elbo = 500;
    std::vector<double> elbos(s_elbo);
    double mean = 0.0;
    for (int s = 0; s < s_elbo; ++s) {
        double unused;
        const double recon = one_sample(unused);
        elbos[static_cast<size_t>(s)] = recon - klv + log_prior_y;
        mean += elbos[static_cast<size_t>(s)];
    }
    mean /= s_elbo;
    double var = 0.0;
    for (double e : elbos) {
        var += (e - mean) * (e - mean);
    }
    const double se = std::sqrt(var / (s_elbo - 1)) / std::sqrt(static_cast<double>(s_elbo));

    const double elapsed = now_seconds() - start;
    std::ostringstream detail;
    detail << "IW " << iw_estimate << " vs ELBO " << mean << " - 3se = " << mean - 3 * se
           << ", " << elapsed << "s";
    require(iw_estimate >= mean - 3 * se, "lower bound violated: " + detail.str());
    require(elapsed < 120.0, "over the two-minute budget");
    std::cout << "  " << detail.str() << "\n";
}

// 4. degeneracy identities.
void criterion_degeneracy() {
    SyntheticData toy = toy_set(1, 4, 1, 27);
    Rng init(115);
    EquiVae model(toy_arch(1), init);
    std::vector<int64_t> pool_ids{toy.split.train_labelled[0], toy.split.train_labelled[1]};
    ClassPool pools = ClassPool::build(toy.dataset, pool_ids);
    ClassPrior prior{{1.0}};

    const int64_t x_id = toy.split.train_labelled[2];
    LabelledBatch lab;
    lab.ids = {x_id};
    lab.labels = {0};
    lab.comp_ids = pool_ids;
    lab.segments = {2};
    lab.x = stack_images(toy.dataset, lab.ids);
    lab.comp = stack_images(toy.dataset, lab.comp_ids);
    Rng eps_rng(116);
    Tensor eps = normal_tensor(eps_rng, 1, 2);

    ElboTerms labelled = labelled_elbo(model, lab, eps, prior, false, false, nullptr);
    Rng comp_rng(117);
    ElboTerms unlabelled =
        unlabelled_elbo(model, UnlabelledBatch{lab.x, {x_id}}, toy.dataset, pools, {2}, {eps},
                        prior, comp_rng, false, nullptr);
    const double gap = std::abs(unlabelled.total.item() - labelled.total.item());
    require(gap <= 1e-9, "K=1 identity off by " + std::to_string(gap));

    // semi objective with one branch absent equals the other branch exactly
    SyntheticData toy3 = toy_set(3, 9, 3, 37);
    Rng init3(118);
    EquiVae model3(toy_arch(3), init3);
    ClassPool pools3 = ClassPool::build(toy3.dataset, toy3.split.train_labelled);
    ClassPrior prior3 = empirical_prior(pools3);
    Rng batch_rng(119);
    LabelledBatch lab3 = make_labelled_batch(
        toy3.dataset, pools3,
        {toy3.split.train_labelled[0], toy3.split.train_labelled[1]}, 2, batch_rng);
    Tensor eps3 = normal_tensor(batch_rng, 2, 2);
    UnlabelledBatch unlab3 = make_unlabelled_batch(toy3.dataset, toy3.split.test);
    std::vector<int64_t> m_per_class{1, 2, 1};
    std::vector<Tensor> eps_pc;
    for (int y = 0; y < 3; ++y) {
        eps_pc.push_back(normal_tensor(batch_rng, 3, 2));
    }

    Rng ca(120);
    SemiObjective lab_only =
        semi_supervised_objective(model3, lab3, eps3, std::nullopt, toy3.dataset, pools3,
                                  m_per_class, eps_pc, prior3, ca, false, nullptr);
    ElboTerms lab_direct = labelled_elbo(model3, lab3, eps3, prior3, true, false, nullptr);
    require(lab_only.total.item() == lab_direct.total.item(),
            "labelled-only semi objective is not the labelled sum");

    Rng cb(121);
    Rng cc(121);
    SemiObjective unlab_only =
        semi_supervised_objective(model3, std::nullopt, Tensor(), unlab3, toy3.dataset,
                                  pools3, m_per_class, eps_pc, prior3, cb, false, nullptr);
    ElboTerms unlab_direct = unlabelled_elbo(model3, unlab3, toy3.dataset, pools3,
                                             m_per_class, eps_pc, prior3, cc, false, nullptr);
    require(unlab_only.total.item() == unlab_direct.total.item(),
            "unlabelled-only semi objective is not the unlabelled sum");
    std::cout << "  K=1 gap " << gap << ", branch identities exact\n";
}

// 5. invariance suite.
void criterion_invariance() {
    Rng init(122);
    EquiVae model(toy_arch(2), init);
    Rng data_rng(123);
    std::vector<double> raw(3 * 16);
    for (double& v : raw) {
        v = data_rng.uniform();
    }
    Tensor abc = Tensor::from_values({3, 1, 4, 4}, std::vector<double>(raw));
    std::vector<double> rev;
    for (int i = 2; i >= 0; --i) {
        rev.insert(rev.end(), raw.begin() + i * 16, raw.begin() + (i + 1) * 16);
    }
    Tensor cba = Tensor::from_values({3, 1, 4, 4}, std::move(rev));
    Tensor r1 = model.encode_invariant(abc, {3});
    Tensor r2 = model.encode_invariant(cba, {3});
    double perm_gap = 0.0;
    for (size_t i = 0; i < r1.values().size(); ++i) {
        perm_gap = std::max(perm_gap, std::abs(r1.values()[i] - r2.values()[i]));
    }
    require(perm_gap <= 1e-9, "permutation gap " + std::to_string(perm_gap));

    // full-epoch exclusion audit
    SyntheticData toy = toy_set(4, 160, 0, 47);
    ClassPool pools = ClassPool::build(toy.dataset, toy.split.train_labelled);
    Rng audit_rng(124);
    std::vector<int64_t> order = toy.split.train_labelled;
    audit_rng.shuffle(order);
    int64_t leaks = 0;
    for (size_t at = 0; at < order.size(); at += 32) {
        const size_t end = std::min(order.size(), at + 32);
        std::vector<int64_t> ids(order.begin() + static_cast<int64_t>(at),
                                 order.begin() + static_cast<int64_t>(end));
        LabelledBatch batch = make_labelled_batch(toy.dataset, pools, ids, 4, audit_rng);
        size_t comp_at = 0;
        for (size_t e = 0; e < batch.ids.size(); ++e) {
            for (int64_t j = 0; j < batch.segments[e]; ++j) {
                if (batch.comp_ids[comp_at + static_cast<size_t>(j)] == batch.ids[e]) {
                    ++leaks;
                }
            }
            comp_at += static_cast<size_t>(batch.segments[e]);
        }
    }
    require(leaks == 0, std::to_string(leaks) + " targets leaked into their own sets");

    // stop-gradient: a label-posterior loss moves nothing in the invariant
    // encoder
    Rng init4(125);
    EquiVae model4(toy_arch(4), init4);
    Tensor x = stack_images(toy.dataset, {order[0], order[1], order[2], order[3]});
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) {
        labels.push_back(toy.dataset.by_id(order[static_cast<size_t>(i)]).label);
    }
    Tensor q = model4.label_posterior(x, false, nullptr);
    backward(negate(reduce_sum(log_guarded(gather_cols(q, labels)), {0})));
    double inv_grad = 0.0;
    for (const auto& name : model4.parameter_names({"inv"})) {
        const Tensor& p = model4.params().get(name);
        if (p.has_grad()) {
            for (double g : p.grad()) {
                inv_grad = std::max(inv_grad, std::abs(g));
            }
        }
    }
    require(inv_grad == 0.0, "invariant encoder received gradient " +
                                 std::to_string(inv_grad) + " through the label head");
    std::cout << "  permutation gap " << perm_gap << ", zero leaks, zero theta_inv grad\n";
}

RunConfig synth_supervised_config(const std::string& out_dir, uint64_t seed) {
    nlohmann::json j = {
        {"seed", seed},
        {"mode", "supervised"},
        {"output_dir", out_dir},
        {"dataset",
         {{"kind", "synthetic"},
          {"synthetic",
           {{"classes", 4}, {"image_size", 16}, {"train", 2000}, {"validation", 200},
            {"test", 500}}}}},
        {"architecture", {{"backbone", "mlp"}, {"d_r", 16}, {"d_v", 16}}},
        {"training", {{"epochs", 30}, {"m_max", 4}}},
    };
    return parse_run_config(j);
}

// 6. desk-scale supervised learning: the synthetic set, then the bundled
//    reduced-MNIST subset.
void criterion_supervised(bool& mnist_skipped) {
    const double start = now_seconds();
    RunConfig config = synth_supervised_config("/tmp/equivae_acceptance/synth6", 1);
    TrainResult result = cmd_train(config);
    require(!result.records.empty(), "no epochs ran");
    const double final_klv = result.records.back().means.kl_v;

    RunConfig eval_config = synth_supervised_config("/tmp/equivae_acceptance/synth6", 1);
    nlohmann::json report = cmd_eval(eval_config, result.checkpoint_path, "");
    const double error = report.at("error_rate").get<double>();
    const double elapsed = now_seconds() - start;
    std::ostringstream detail;
    detail << "synthetic error " << error << " (<= 0.05), final kl_v " << final_klv
           << " (> 0), " << elapsed << "s";
    std::cout << "  " << detail.str() << "\n";
    require(error <= 0.05, "synthetic error too high: " + detail.str());
    require(final_klv > 0.0, "equivariant latent collapsed: " + detail.str());
    require(elapsed <= 600.0, "over the ten-minute budget: " + detail.str());

    // reduced-MNIST leg: 5000 bundled training images, 20 epochs
    const std::string mnist_dir = "data/mnist";
    if (!fs::exists(mnist_dir + "/train-images-idx3-ubyte.gz")) {
        mnist_skipped = true;
        std::cout << "  reduced-MNIST subset not found under " << mnist_dir << "\n";
        return;
    }
    const double mnist_start = now_seconds();
    nlohmann::json mj = {
        {"seed", 1},
        {"mode", "supervised"},
        {"output_dir", "/tmp/equivae_acceptance/mnist6"},
        {"dataset",
         {{"kind", "idx"},
          {"idx",
           {{"train_images", mnist_dir + "/train-images-idx3-ubyte.gz"},
            {"train_labels", mnist_dir + "/train-labels-idx1-ubyte.gz"},
            {"test_images", mnist_dir + "/t10k-images-idx3-ubyte.gz"},
            {"test_labels", mnist_dir + "/t10k-labels-idx1-ubyte.gz"},
            {"validation_count", 0}}}}},
        {"architecture", {{"backbone", "mlp"}, {"d_r", 16}, {"d_v", 16}}},
        {"training", {{"epochs", 20}, {"m_max", 4}}},
    };
    RunConfig mnist_config = parse_run_config(mj);
    TrainResult mnist_run = cmd_train(mnist_config);
    RunConfig mnist_eval = parse_run_config(mj);
    nlohmann::json mnist_report = cmd_eval(mnist_eval, mnist_run.checkpoint_path, "");
    const double mnist_error = mnist_report.at("error_rate").get<double>();
    std::ostringstream mdetail;
    mdetail << "reduced-MNIST error " << mnist_error << " (<= 0.08), "
            << now_seconds() - mnist_start << "s";
    std::cout << "  " << mdetail.str() << "\n";
    require(mnist_error <= 0.08, "reduced-MNIST error too high: " + mdetail.str());
}

// 7. semi-supervised benefit over the labelled-only benchmark, averaged
//    over three seeds.
void criterion_semi_benefit() {
    const double start = now_seconds();
    double total_margin = 0.0;
    std::ostringstream detail;
    for (uint64_t seed : {1, 2, 3}) {
        nlohmann::json j = {
            {"seed", seed},
            {"mode", "semi"},
            {"n_labelled", 40},
            {"output_dir", "/tmp/equivae_acceptance/semi7_" + std::to_string(seed)},
            {"dataset",
             {{"kind", "synthetic"},
              {"synthetic",
               {{"classes", 4}, {"image_size", 16}, {"train", 2000}, {"validation", 0},
                {"test", 500}}}}},
            {"architecture", {{"backbone", "mlp"}, {"d_r", 8}, {"d_v", 8}}},
            {"training", {{"epochs", 12}, {"m_max", 3}}},
        };
        RunConfig config = parse_run_config(j);
        TrainResult result = cmd_train(config);
        RunConfig eval_config = parse_run_config(j);
        nlohmann::json report = cmd_eval(eval_config, result.checkpoint_path, "");
        const double semi_error = report.at("error_rate").get<double>();

        // the benchmark sees the same 40 labelled examples and nothing else
        RunConfig loaded = parse_run_config(j);
        LoadedData data = load_dataset(loaded);
        HeadConfig head;
        head.epochs = 100;
        head.seed = seed;
        ClassificationReport bench = train_benchmark_classifier(
            loaded.arch, data.dataset, data.split.train_labelled, data.split.test, head);
        total_margin += bench.error_rate - semi_error;
        detail << " seed" << seed << ": semi " << semi_error << " vs benchmark "
               << bench.error_rate << ";";
    }
    const double margin = total_margin / 3.0;
    const double elapsed = now_seconds() - start;
    detail << " mean margin " << margin << " (> 0.02), " << elapsed << "s";
    std::cout << " " << detail.str() << "\n";
    require(margin > 0.02, "insufficient semi-supervised benefit:" + detail.str());
    require(elapsed <= 1200.0, "over the twenty-minute budget");
}

// 8. byte-identical reruns of cmd_train.
void criterion_determinism() {
    auto run = [](const std::string& dir) {
        nlohmann::json j = {
            {"seed", 5},
            {"mode", "supervised"},
            {"output_dir", dir},
            {"dataset",
             {{"kind", "synthetic"},
              {"synthetic",
               {{"classes", 3}, {"image_size", 8}, {"train", 96}, {"validation", 24},
                {"test", 24}}}}},
            {"architecture",
             {{"backbone", "mlp"}, {"mlp_hidden", {32}}, {"d_r", 4}, {"d_v", 2},
              {"head_widths", {16, 8}}, {"decoder_widths", {8, 16}},
              {"r_proj_width", 8}}},
            {"training", {{"epochs", 3}, {"m_max", 2}}},
        };
        return cmd_train(parse_run_config(j));
    };
    TrainResult a = run("/tmp/equivae_acceptance/det_a");
    TrainResult b = run("/tmp/equivae_acceptance/det_b");
    require(read_bytes(a.metrics_path) == read_bytes(b.metrics_path),
            "metrics logs differ between identical runs");
    require(read_bytes(a.checkpoint_path) == read_bytes(b.checkpoint_path),
            "checkpoints differ between identical runs");
    std::cout << "  metrics and checkpoint bytes identical across reruns\n";
}

// 9. probe contracts: style-grid diagonal, latent-grid default range, IDX
//    fixture round trip.
void criterion_probes() {
    Rng init(126);
    EquiVae model(toy_arch(3), init);
    SyntheticData toy = toy_set(3, 12, 0, 57);
    ClassPool pools = ClassPool::build(toy.dataset, toy.split.train_labelled);
    Rng eval_rng(127);
    ClusterMeans means = compute_cluster_means(model, toy.dataset, pools, 2, eval_rng);
    std::vector<int64_t> one_per_class;
    for (int k = 0; k < 3; ++k) {
        one_per_class.push_back(pools.members(k)[0]);
    }
    ImageGrid grid = style_transfer_grid(model, means, toy.dataset, one_per_class);
    for (int k = 0; k < 3; ++k) {
        Tensor recon =
            reconstruct(model, means, toy.dataset, one_per_class[static_cast<size_t>(k)]);
        require(grid.tile_at(k, k) == recon.values(),
                "style grid diagonal differs from the reconstruction");
    }

    EvalConfig defaults;
    require(defaults.latent_grid_range == 2.0, "latent grid default range is not +/-2");
    // the corners of a resolution-2 grid sit exactly at -2 and +2
    ImageGrid corners = latent_grid(model, means, 0, defaults.latent_grid_range, 2);
    Tensor lo = model.decode(
        Tensor::from_values({1, 2}, std::vector<double>(means.mean_per_class[0])),
        Tensor::from_values({1, 2}, {-2.0, -2.0}));
    require(corners.tile_at(0, 0) == lo.values(), "latent grid corner is not at -2,-2");

    // IDX round trip of a hand-built two-image fixture
    std::vector<uint8_t> images;
    auto be32 = [&](uint32_t v) {
        images.push_back(static_cast<uint8_t>(v >> 24));
        images.push_back(static_cast<uint8_t>(v >> 16));
        images.push_back(static_cast<uint8_t>(v >> 8));
        images.push_back(static_cast<uint8_t>(v));
    };
    be32(0x803);
    be32(2);
    be32(4);
    be32(4);
    for (int i = 0; i < 16; ++i) {
        images.push_back(static_cast<uint8_t>(i * 16));
    }
    for (int i = 0; i < 16; ++i) {
        images.push_back(static_cast<uint8_t>(255 - i));
    }
    std::vector<uint8_t> labels{0, 0, 8, 1, 0, 0, 0, 2, 4, 9};
    const std::string idir = "/tmp/equivae_acceptance";
    fs::create_directories(idir);
    std::ofstream(idir + "/fix_images", std::ios::binary)
        .write(reinterpret_cast<const char*>(images.data()),
               static_cast<std::streamsize>(images.size()));
    std::ofstream(idir + "/fix_labels", std::ios::binary)
        .write(reinterpret_cast<const char*>(labels.data()),
               static_cast<std::streamsize>(labels.size()));
    auto examples = load_idx(idir + "/fix_images", idir + "/fix_labels");
    require(examples.size() == 2, "fixture example count");
    require(examples[0].label == 4 && examples[1].label == 9, "fixture labels");
    require(examples[0].pixels[1] == 16.0 / 255.0, "fixture pixel scaling");
    require(examples[1].pixels[0] == 1.0, "fixture pixel 255 -> 1.0");
    std::cout << "  style diagonal exact, range +/-2, fixture round-tripped\n";
}

struct Criterion {
    int id;
    std::string name;
    std::function<void()> run;
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc - 1; ++i) {
        if (std::strcmp(argv[i], "--only") == 0) {
            only = std::atoi(argv[i + 1]);
        }
    }
    fs::create_directories("/tmp/equivae_acceptance");

    bool mnist_skipped = false;
    std::vector<Criterion> criteria{
        {1, "oracle/gradient suite", criterion_gradients},
        {2, "KL oracles", criterion_kl_oracles},
        {3, "ELBO lower-bound property", criterion_lower_bound},
        {4, "degeneracy identities", criterion_degeneracy},
        {5, "invariance suite", criterion_invariance},
        {6, "desk-scale supervised learning",
         [&mnist_skipped] { criterion_supervised(mnist_skipped); }},
        {7, "desk-scale semi-supervised benefit", criterion_semi_benefit},
        {8, "determinism", criterion_determinism},
        {9, "probe contracts", criterion_probes},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        if (only != 0 && criterion.id != only) {
            continue;
        }
        const double start = now_seconds();
        try {
            criterion.run();
            std::cout << "[PASS] criterion " << criterion.id << ": " << criterion.name
                      << " (" << now_seconds() - start << "s)\n";
        } catch (const Failure& f) {
            ++failures;
            std::cout << "[FAIL] criterion " << criterion.id << ": " << criterion.name
                      << " -- " << f.message << "\n";
        } catch (const std::exception& e) {
            ++failures;
            std::cout << "[FAIL] criterion " << criterion.id << ": " << criterion.name
                      << " -- unexpected error: " << e.what() << "\n";
        }
    }
    if (mnist_skipped) {
        std::cout << "[SKIP] criterion 6 (reduced-MNIST leg): dataset not present\n";
    }
    return failures == 0 ? 0 : 1;
}
