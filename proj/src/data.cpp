#include "equivae/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "equivae/errors.hpp"

namespace equivae {

const LabelledExample& Dataset::by_id(int64_t id) const {
    if (id < 0 || id >= static_cast<int64_t>(examples.size())) {
        throw ContractError("example id " + std::to_string(id) + " out of range");
    }
    return examples[static_cast<size_t>(id)];
}

ClassPool ClassPool::build(const Dataset& dataset, const std::vector<int64_t>& ids,
                           bool require_pairs) {
    ClassPool pool;
    pool.by_class_.assign(static_cast<size_t>(dataset.classes), {});
    for (int64_t id : ids) {
        const auto& ex = dataset.by_id(id);
        if (ex.label < 0 || ex.label >= dataset.classes) {
            throw ContractError("label " + std::to_string(ex.label) + " out of range");
        }
        pool.by_class_[static_cast<size_t>(ex.label)].push_back(id);
    }
    if (require_pairs) {
        for (size_t k = 0; k < pool.by_class_.size(); ++k) {
            if (pool.by_class_[k].size() == 1) {
                throw ContractError("class " + std::to_string(k) +
                                    " has a single labelled example; at least two are "
                                    "required");
            }
        }
    }
    return pool;
}

const std::vector<int64_t>& ClassPool::members(int label) const {
    if (label < 0 || label >= classes()) {
        throw ContractError("class " + std::to_string(label) + " out of range");
    }
    return by_class_[static_cast<size_t>(label)];
}

int64_t ClassPool::total() const {
    int64_t n = 0;
    for (const auto& list : by_class_) {
        n += static_cast<int64_t>(list.size());
    }
    return n;
}

ClassPrior empirical_prior(const ClassPool& pool) {
    const double total = static_cast<double>(pool.total());
    ClassPrior prior;
    prior.probs.resize(static_cast<size_t>(pool.classes()));
    for (int k = 0; k < pool.classes(); ++k) {
        prior.probs[static_cast<size_t>(k)] =
            static_cast<double>(pool.members(k).size()) / total;
    }
    return prior;
}

std::vector<int64_t> sample_complementary(const ClassPool& pool, int label,
                                          std::optional<int64_t> exclude_id, int64_t m,
                                          Rng& rng) {
    if (m < 1) {
        throw ContractError("complementary sample size must be >= 1");
    }
    std::vector<int64_t> candidates;
    candidates.reserve(pool.members(label).size());
    for (int64_t id : pool.members(label)) {
        if (!exclude_id || id != *exclude_id) {
            candidates.push_back(id);
        }
    }
    if (candidates.empty()) {
        throw ContractError("class " + std::to_string(label) +
                            " pool is empty after exclusion");
    }
    std::vector<int64_t> draws;
    draws.reserve(static_cast<size_t>(m));
    const int64_t n = static_cast<int64_t>(candidates.size());
    if (n >= m) {
        // Partial Fisher-Yates: without replacement.
        for (int64_t i = 0; i < m; ++i) {
            const int64_t j = i + rng.uniform_int(n - i);
            std::swap(candidates[static_cast<size_t>(i)], candidates[static_cast<size_t>(j)]);
            draws.push_back(candidates[static_cast<size_t>(i)]);
        }
    } else {
        for (int64_t i = 0; i < m; ++i) {
            draws.push_back(candidates[static_cast<size_t>(rng.uniform_int(n))]);
        }
    }
    return draws;
}

Tensor stack_images(const Dataset& dataset, const std::vector<int64_t>& ids) {
    if (ids.empty()) {
        throw ContractError("stack_images: empty id list");
    }
    const int64_t px = dataset.pixel_count();
    std::vector<double> buf(static_cast<size_t>(px) * ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        const auto& ex = dataset.by_id(ids[i]);
        std::copy(ex.pixels.begin(), ex.pixels.end(),
                  buf.begin() + static_cast<int64_t>(i) * px);
    }
    return Tensor::from_values(
        Shape{static_cast<int64_t>(ids.size()), dataset.channels, dataset.height, dataset.width},
        std::move(buf));
}

LabelledBatch make_labelled_batch(const Dataset& dataset, const ClassPool& pool,
                                  const std::vector<int64_t>& ids, int64_t m_max, Rng& rng) {
    if (ids.empty()) {
        throw ContractError("make_labelled_batch: empty batch");
    }
    if (m_max < 1) {
        throw ContractError("m_max must be >= 1");
    }
    LabelledBatch batch;
    batch.ids = ids;
    batch.labels.reserve(ids.size());
    for (int64_t id : ids) {
        const auto& ex = dataset.by_id(id);
        batch.labels.push_back(ex.label);
        const int64_t m = 1 + rng.uniform_int(m_max);
        auto draw = sample_complementary(pool, ex.label, id, m, rng);
        batch.segments.push_back(m);
        batch.comp_ids.insert(batch.comp_ids.end(), draw.begin(), draw.end());
    }
    batch.x = stack_images(dataset, ids);
    batch.comp = stack_images(dataset, batch.comp_ids);
    return batch;
}

UnlabelledBatch make_unlabelled_batch(const Dataset& dataset, const std::vector<int64_t>& ids) {
    if (ids.empty()) {
        throw ContractError("make_unlabelled_batch: empty batch");
    }
    return UnlabelledBatch{stack_images(dataset, ids), ids};
}

namespace {

double bilinear_at(const std::vector<double>& img, int64_t h, int64_t w, double y, double x) {
    const int64_t y0 = static_cast<int64_t>(std::floor(y));
    const int64_t x0 = static_cast<int64_t>(std::floor(x));
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    auto at = [&](int64_t yy, int64_t xx) -> double {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
        return img[static_cast<size_t>(yy * w + xx)];
    };
    return (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
           fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

std::vector<double> translate_image(const std::vector<double>& img, int64_t h, int64_t w,
                                    int64_t dy, int64_t dx) {
    std::vector<double> out(img.size(), 0.0);
    for (int64_t y = 0; y < h; ++y) {
        const int64_t sy = y - dy;
        if (sy < 0 || sy >= h) continue;
        for (int64_t x = 0; x < w; ++x) {
            const int64_t sx = x - dx;
            if (sx < 0 || sx >= w) continue;
            out[static_cast<size_t>(y * w + x)] = img[static_cast<size_t>(sy * w + sx)];
        }
    }
    return out;
}

}  // namespace

std::vector<double> rotate_bilinear(const std::vector<double>& img, int64_t h, int64_t w,
                                    double radians) {
    const double cy = static_cast<double>(h - 1) / 2.0;
    const double cx = static_cast<double>(w - 1) / 2.0;
    const double c = std::cos(radians);
    const double s = std::sin(radians);
    std::vector<double> out(img.size(), 0.0);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            // Inverse mapping: sample the source at the back-rotated point.
            const double dy = static_cast<double>(y) - cy;
            const double dx = static_cast<double>(x) - cx;
            const double sy = cy + dy * c - dx * s;
            const double sx = cx + dy * s + dx * c;
            out[static_cast<size_t>(y * w + x)] = bilinear_at(img, h, w, sy, sx);
        }
    }
    return out;
}

std::vector<double> synthetic_prototype(int label, int64_t size) {
    const int64_t s = size;
    std::vector<double> img(static_cast<size_t>(s * s), 0.0);
    const double c = static_cast<double>(s - 1) / 2.0;
    const double r = static_cast<double>(s) / 4.0;
    const double bar = std::max(1.0, static_cast<double>(s) / 8.0);
    auto set = [&](int64_t y, int64_t x) {
        img[static_cast<size_t>(y * s + x)] = 1.0;
    };
    for (int64_t y = 0; y < s; ++y) {
        for (int64_t x = 0; x < s; ++x) {
            const double dy = static_cast<double>(y) - c;
            const double dx = static_cast<double>(x) - c;
            switch (label) {
                case 0:  // filled disc
                    if (dy * dy + dx * dx <= r * r) set(y, x);
                    break;
                case 1:  // plus sign
                    if ((std::abs(dy) < bar || std::abs(dx) < bar) &&
                        std::abs(dy) <= 2 * r && std::abs(dx) <= 2 * r)
                        set(y, x);
                    break;
                case 2:  // two horizontal bars
                    if (std::abs(dx) <= 1.5 * r &&
                        (std::abs(dy - r) < bar || std::abs(dy + r) < bar))
                        set(y, x);
                    break;
                case 3:  // X
                    if ((std::abs(dy - dx) < bar || std::abs(dy + dx) < bar) &&
                        std::abs(dy) <= 1.5 * r && std::abs(dx) <= 1.5 * r)
                        set(y, x);
                    break;
                case 4:  // square outline
                    if (std::max(std::abs(dy), std::abs(dx)) <= 1.5 * r &&
                        std::max(std::abs(dy), std::abs(dx)) > 1.5 * r - bar)
                        set(y, x);
                    break;
                case 5:  // vertical bar
                    if (std::abs(dx) < bar && std::abs(dy) <= 1.8 * r) set(y, x);
                    break;
                case 6:  // T
                    if ((std::abs(dy + r) < bar && std::abs(dx) <= 1.5 * r) ||
                        (std::abs(dx) < bar && dy >= -r && dy <= 1.8 * r))
                        set(y, x);
                    break;
                case 7:  // two opposing corner blocks
                    if ((dy < 0 && dx < 0 && dy * dy + dx * dx <= 4 * r * r &&
                         std::abs(dy) > bar && std::abs(dx) > bar) ||
                        (dy > 0 && dx > 0 && dy * dy + dx * dx <= 4 * r * r &&
                         std::abs(dy) > bar && std::abs(dx) > bar))
                        set(y, x);
                    break;
                default:
                    throw ConfigError("no built-in prototype for class " +
                                      std::to_string(label));
            }
        }
    }
    return img;
}

SyntheticData synth_generate(const SyntheticSpec& spec) {
    if (spec.classes < 1 || spec.image_size < 4) {
        throw ConfigError("synthetic spec needs classes >= 1 and image_size >= 4");
    }
    if (!(spec.intensity_lo <= spec.intensity_hi) || spec.intensity_lo < 0.0) {
        throw ConfigError("synthetic intensity range invalid");
    }
    std::vector<std::vector<double>> protos = spec.prototypes;
    if (protos.empty()) {
        for (int k = 0; k < spec.classes; ++k) {
            protos.push_back(synthetic_prototype(k, spec.image_size));
        }
    }
    if (static_cast<int>(protos.size()) != spec.classes) {
        throw ConfigError("need one prototype per class");
    }
    for (size_t a = 0; a < protos.size(); ++a) {
        if (static_cast<int64_t>(protos[a].size()) != spec.image_size * spec.image_size) {
            throw ConfigError("prototype size mismatch");
        }
        for (size_t b = a + 1; b < protos.size(); ++b) {
            if (protos[a] == protos[b]) {
                throw ConfigError("prototypes must be distinct");
            }
        }
    }

    SyntheticData out;
    out.dataset.classes = spec.classes;
    out.dataset.channels = 1;
    out.dataset.height = spec.image_size;
    out.dataset.width = spec.image_size;

    Rng rng(spec.seed);
    const int64_t s = spec.image_size;
    auto generate = [&](int64_t count, std::vector<int64_t>& ids) {
        for (int64_t i = 0; i < count; ++i) {
            const int label = static_cast<int>(i % spec.classes);
            const double theta =
                rng.uniform(-spec.rotation_deg, spec.rotation_deg) * std::numbers::pi / 180.0;
            const int64_t span = 2 * spec.translate_px + 1;
            const int64_t dy = rng.uniform_int(span) - spec.translate_px;
            const int64_t dx = rng.uniform_int(span) - spec.translate_px;
            const double gain = rng.uniform(spec.intensity_lo, spec.intensity_hi);

            auto img = rotate_bilinear(protos[static_cast<size_t>(label)], s, s, theta);
            img = translate_image(img, s, s, dy, dx);
            for (double& v : img) {
                v = std::clamp(v * gain, 0.0, 1.0);
            }
            const int64_t id = static_cast<int64_t>(out.dataset.examples.size());
            out.dataset.examples.push_back(LabelledExample{id, label, std::move(img)});
            ids.push_back(id);
        }
    };
    generate(spec.train, out.split.train_labelled);
    generate(spec.validation, out.split.validation);
    generate(spec.test, out.split.test);
    return out;
}

DatasetSplit make_semi_split(const Dataset& dataset, const DatasetSplit& base,
                             int64_t n_labelled, Rng& rng) {
    const int64_t k = dataset.classes;
    if (n_labelled < 2 * k) {
        throw ContractError("n_labelled must be at least 2 per class (" + std::to_string(2 * k) +
                            "), got " + std::to_string(n_labelled));
    }
    if (n_labelled > static_cast<int64_t>(base.train_labelled.size())) {
        throw ContractError("n_labelled exceeds the training set size");
    }

    std::vector<std::vector<int64_t>> per_class(static_cast<size_t>(k));
    for (int64_t id : base.train_labelled) {
        per_class[static_cast<size_t>(dataset.by_id(id).label)].push_back(id);
    }
    DatasetSplit out = base;
    out.train_labelled.clear();
    out.train_unlabelled.clear();

    const int64_t each = n_labelled / k;
    const int64_t extra = n_labelled % k;
    for (int c = 0; c < k; ++c) {
        auto& ids = per_class[static_cast<size_t>(c)];
        const int64_t want = each + (c < extra ? 1 : 0);
        if (want > static_cast<int64_t>(ids.size())) {
            throw ContractError("class " + std::to_string(c) + " has only " +
                                std::to_string(ids.size()) + " examples, need " +
                                std::to_string(want));
        }
        rng.shuffle(ids);
        for (int64_t i = 0; i < static_cast<int64_t>(ids.size()); ++i) {
            if (i < want) {
                out.train_labelled.push_back(ids[static_cast<size_t>(i)]);
            } else {
                out.train_unlabelled.push_back(ids[static_cast<size_t>(i)]);
            }
        }
    }
    std::sort(out.train_labelled.begin(), out.train_labelled.end());
    std::sort(out.train_unlabelled.begin(), out.train_unlabelled.end());
    return out;
}

Standardization standardize(Dataset& dataset, const std::vector<int64_t>& fit_ids) {
    if (fit_ids.empty()) {
        throw ContractError("standardize: no examples to fit on");
    }
    double sum = 0.0;
    int64_t n = 0;
    for (int64_t id : fit_ids) {
        for (double v : dataset.by_id(id).pixels) {
            sum += v;
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (int64_t id : fit_ids) {
        for (double v : dataset.by_id(id).pixels) {
            ss += (v - mean) * (v - mean);
        }
    }
    const double std_dev = std::sqrt(ss / static_cast<double>(n));
    if (std_dev < 1e-12) {
        throw DomainError("standardize: dataset is constant");
    }
    Standardization stats{mean, std_dev};
    apply_standardization(dataset, stats);
    return stats;
}

void apply_standardization(Dataset& dataset, const Standardization& stats) {
    for (auto& ex : dataset.examples) {
        for (double& v : ex.pixels) {
            v = (v - stats.mean) / stats.std_dev;
        }
    }
}

}  // namespace equivae
