#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "equivae/idx.hpp"
#include "support/toy.hpp"

using namespace equivae;
using testsupport::toy_data;

namespace {

void push_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

/// Two 28x28 images: the first all zeros with one 255 pixel, the second all
/// 255. Labels 3 and 7.
std::pair<std::vector<uint8_t>, std::vector<uint8_t>> tiny_idx_fixture() {
    std::vector<uint8_t> images;
    push_be32(images, 0x00000803);
    push_be32(images, 2);
    push_be32(images, 28);
    push_be32(images, 28);
    std::vector<uint8_t> first(28 * 28, 0);
    first[5] = 255;
    images.insert(images.end(), first.begin(), first.end());
    images.insert(images.end(), 28 * 28, 255);

    std::vector<uint8_t> labels;
    push_be32(labels, 0x00000801);
    push_be32(labels, 2);
    labels.push_back(3);
    labels.push_back(7);
    return {images, labels};
}

std::string write_temp(const std::vector<uint8_t>& bytes, const std::string& name) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    return path.string();
}

std::vector<uint8_t> gzip_bytes(const std::vector<uint8_t>& raw) {
    z_stream zs{};
    REQUIRE(deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                         Z_DEFAULT_STRATEGY) == Z_OK);
    std::vector<uint8_t> out(raw.size() + 256);
    zs.next_in = const_cast<Bytef*>(raw.data());
    zs.avail_in = static_cast<uInt>(raw.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    out.resize(out.size() - zs.avail_out);
    deflateEnd(&zs);
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("idx loader round-trips the hand-built fixture") {
    auto [images, labels] = tiny_idx_fixture();
    const std::string ipath = write_temp(images, "equivae_test_images.idx");
    const std::string lpath = write_temp(labels, "equivae_test_labels.idx");

    auto examples = load_idx(ipath, lpath);
    REQUIRE(examples.size() == 2);
    CHECK(examples[0].label == 3);
    CHECK(examples[1].label == 7);
    CHECK(examples[0].pixels.size() == 28 * 28);
    CHECK(examples[0].pixels[5] == 1.0);   // byte 255
    CHECK(examples[0].pixels[6] == 0.0);   // byte 0
    CHECK(examples[1].pixels[100] == 1.0);
}

TEST_CASE("idx loader accepts gzip-compressed files") {
    auto [images, labels] = tiny_idx_fixture();
    const std::string ipath = write_temp(gzip_bytes(images), "equivae_test_images.idx.gz");
    const std::string lpath = write_temp(gzip_bytes(labels), "equivae_test_labels.idx.gz");
    auto examples = load_idx(ipath, lpath);
    REQUIRE(examples.size() == 2);
    CHECK(examples[1].label == 7);
}

TEST_CASE("idx loader raises distinct errors") {
    auto [images, labels] = tiny_idx_fixture();

    auto bad_magic = images;
    bad_magic[3] = 0x42;
    CHECK_THROWS_AS(load_idx(write_temp(bad_magic, "bad_magic.idx"),
                             write_temp(labels, "ok_labels.idx")),
                    BadMagicError);

    auto truncated = images;
    truncated.resize(truncated.size() - 10);
    CHECK_THROWS_AS(load_idx(write_temp(truncated, "truncated.idx"),
                             write_temp(labels, "ok_labels.idx")),
                    TruncatedFileError);

    std::vector<uint8_t> three_labels;
    push_be32(three_labels, 0x00000801);
    push_be32(three_labels, 3);
    three_labels.insert(three_labels.end(), {1, 2, 3});
    CHECK_THROWS_AS(load_idx(write_temp(images, "ok_images.idx"),
                             write_temp(three_labels, "three_labels.idx")),
                    CountMismatchError);
}

TEST_CASE("class pools partition by label and reject singletons") {
    Dataset dataset;
    dataset.classes = 2;
    dataset.channels = 1;
    dataset.height = 1;
    dataset.width = 1;
    for (int i = 0; i < 4; ++i) {
        dataset.examples.push_back(LabelledExample{i, i < 2 ? 0 : 1, {0.0}});
    }
    ClassPool pools = ClassPool::build(dataset, {0, 1, 2, 3});
    CHECK(pools.members(0) == std::vector<int64_t>{0, 1});
    CHECK(pools.members(1) == std::vector<int64_t>{2, 3});

    // shuffled input gives the same pools as sets
    ClassPool shuffled = ClassPool::build(dataset, {3, 0, 2, 1});
    CHECK(std::set<int64_t>(shuffled.members(1).begin(), shuffled.members(1).end()) ==
          std::set<int64_t>{2, 3});

    try {
        ClassPool::build(dataset, {0, 1, 2});
        FAIL("expected ContractError");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find("class 1") != std::string::npos);
    }
}

TEST_CASE("complementary sampling honors exclusion and falls back to replacement") {
    Dataset dataset;
    dataset.classes = 1;
    dataset.channels = 1;
    dataset.height = 1;
    dataset.width = 1;
    for (int i = 0; i < 5; ++i) {
        dataset.examples.push_back(LabelledExample{i, 0, {0.0}});
    }
    ClassPool pools = ClassPool::build(dataset, {0, 1, 2, 3, 4});

    Rng rng(61);
    // pool {0,1}, exclude 0 -> always 1
    ClassPool pair = ClassPool::build(dataset, {0, 1});
    for (int i = 0; i < 50; ++i) {
        CHECK(sample_complementary(pair, 0, 0, 1, rng) == std::vector<int64_t>{1});
    }

    // frequencies over the 5-pool with m=1, no exclusion
    std::vector<int64_t> counts(5, 0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        counts[static_cast<size_t>(sample_complementary(pools, 0, std::nullopt, 1, rng)[0])]++;
    }
    for (int64_t c : counts) {
        CHECK(std::abs(static_cast<double>(c) / draws - 0.2) < 0.015);
    }

    // m=3 from a pool of 3 with exclusion leaving 2: repeats allowed, the
    // excluded id never shows up
    ClassPool triple = ClassPool::build(dataset, {0, 1, 2});
    bool saw_repeat = false;
    for (int i = 0; i < 200; ++i) {
        auto draw = sample_complementary(triple, 0, 2, 3, rng);
        CHECK(draw.size() == 3);
        std::set<int64_t> unique(draw.begin(), draw.end());
        if (unique.size() < draw.size()) {
            saw_repeat = true;
        }
        CHECK(unique.count(2) == 0);
    }
    CHECK(saw_repeat);

    CHECK_THROWS_AS(sample_complementary(pair, 0, 0, 0, rng), ContractError);
    Dataset one;
    one.classes = 1;
    one.channels = 1;
    one.height = 1;
    one.width = 1;
    one.examples.push_back(LabelledExample{0, 0, {0.0}});
    ClassPool single = ClassPool::build(one, {0}, /*require_pairs=*/false);
    Rng rng_single(1);
    CHECK_THROWS_AS(sample_complementary(single, 0, 0, 1, rng_single), ContractError);
}

TEST_CASE("labelled batches draw m uniformly and never leak the target") {
    SyntheticData toy = toy_data(2, 40, 0, 0);
    ClassPool pools = ClassPool::build(toy.dataset, toy.split.train_labelled);
    Rng rng(62);

    // m_max = 1 forces m = 1
    LabelledBatch batch =
        make_labelled_batch(toy.dataset, pools, toy.split.train_labelled, 1, rng);
    for (int64_t m : batch.segments) {
        CHECK(m == 1);
    }

    // m frequencies for m_max = 4
    std::vector<int64_t> counts(4, 0);
    const int rounds = 250;  // 250 * 40 = 10^4 draws
    for (int i = 0; i < rounds; ++i) {
        LabelledBatch b =
            make_labelled_batch(toy.dataset, pools, toy.split.train_labelled, 4, rng);
        for (int64_t m : b.segments) {
            counts[static_cast<size_t>(m - 1)]++;
        }
    }
    for (int64_t c : counts) {
        CHECK(std::abs(static_cast<double>(c) / (rounds * 40.0) - 0.25) < 0.02);
    }

    // full-epoch audit: a target id never appears in its own set
    for (int i = 0; i < 25; ++i) {
        LabelledBatch b =
            make_labelled_batch(toy.dataset, pools, toy.split.train_labelled, 4, rng);
        size_t at = 0;
        for (size_t e = 0; e < b.ids.size(); ++e) {
            for (int64_t j = 0; j < b.segments[e]; ++j) {
                CHECK(b.comp_ids[at + static_cast<size_t>(j)] != b.ids[e]);
            }
            at += static_cast<size_t>(b.segments[e]);
        }
    }
}

TEST_CASE("synthetic data: identity transforms, determinism, full-turn rotation") {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.image_size = 8;
    spec.train = 6;
    spec.validation = 0;
    spec.test = 0;
    spec.rotation_deg = 0.0;
    spec.translate_px = 0;
    spec.intensity_lo = 1.0;
    spec.intensity_hi = 1.0;
    spec.seed = 5;
    SyntheticData plain = synth_generate(spec);
    for (const auto& ex : plain.dataset.examples) {
        CHECK(ex.pixels == synthetic_prototype(ex.label, 8));
    }

    SyntheticData again = synth_generate(spec);
    for (size_t i = 0; i < plain.dataset.examples.size(); ++i) {
        CHECK(plain.dataset.examples[i].pixels == again.dataset.examples[i].pixels);
    }

    auto proto = synthetic_prototype(0, 8);
    auto full_turn = rotate_bilinear(proto, 8, 8, 2.0 * std::numbers::pi);
    auto untouched = rotate_bilinear(proto, 8, 8, 0.0);
    for (size_t i = 0; i < proto.size(); ++i) {
        CHECK(std::abs(full_turn[i] - untouched[i]) < 1e-6);
    }
}

TEST_CASE("round-trip: pools flatten back to the input multiset") {
    SyntheticData toy = toy_data(3, 12, 0, 0);
    ClassPool pools = ClassPool::build(toy.dataset, toy.split.train_labelled);
    std::multiset<std::pair<int64_t, int>> flattened;
    for (int k = 0; k < pools.classes(); ++k) {
        for (int64_t id : pools.members(k)) {
            flattened.insert({id, k});
        }
    }
    std::multiset<std::pair<int64_t, int>> expected;
    for (int64_t id : toy.split.train_labelled) {
        expected.insert({id, toy.dataset.by_id(id).label});
    }
    CHECK(flattened == expected);
}

TEST_CASE("semi split stratifies and keeps the id sets disjoint") {
    Dataset dataset;
    dataset.classes = 10;
    dataset.channels = 1;
    dataset.height = 1;
    dataset.width = 1;
    DatasetSplit base;
    for (int i = 0; i < 400; ++i) {
        dataset.examples.push_back(LabelledExample{i, i % 10, {0.0}});
        base.train_labelled.push_back(i);
    }
    Rng rng(63);
    DatasetSplit semi = make_semi_split(dataset, base, 100, rng);
    CHECK(semi.train_labelled.size() == 100);
    CHECK(semi.train_unlabelled.size() == 300);
    std::vector<int> per_class(10, 0);
    for (int64_t id : semi.train_labelled) {
        per_class[static_cast<size_t>(dataset.by_id(id).label)]++;
    }
    for (int c : per_class) {
        CHECK(c == 10);
    }
    std::set<int64_t> lab(semi.train_labelled.begin(), semi.train_labelled.end());
    for (int64_t id : semi.train_unlabelled) {
        CHECK(lab.count(id) == 0);
    }

    DatasetSplit minimum = make_semi_split(dataset, base, 20, rng);
    per_class.assign(10, 0);
    for (int64_t id : minimum.train_labelled) {
        per_class[static_cast<size_t>(dataset.by_id(id).label)]++;
    }
    for (int c : per_class) {
        CHECK(c == 2);
    }
    CHECK_THROWS_AS(make_semi_split(dataset, base, 19, rng), ContractError);
}

TEST_CASE("standardisation leaves pooled mean 0 and std 1") {
    SyntheticData toy = toy_data(2, 50, 0, 0);
    std::vector<int64_t> ids = toy.split.train_labelled;
    standardize(toy.dataset, ids);
    double sum = 0.0;
    double ss = 0.0;
    int64_t n = 0;
    for (int64_t id : ids) {
        for (double v : toy.dataset.by_id(id).pixels) {
            sum += v;
            ss += v * v;
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    const double var = ss / static_cast<double>(n) - mean * mean;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
}

TEST_SUITE_END();
