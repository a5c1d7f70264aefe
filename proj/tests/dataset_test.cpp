#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "unlearn/dataset.hpp"
#include "unlearn/mlp.hpp"

using namespace unlearn;

namespace {

namespace fs = std::filesystem;

std::string temp_file(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

// Rows serialized exactly, for multiset comparisons.
std::vector<std::string> row_keys(const Dataset& ds) {
    std::vector<std::string> keys;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        std::string k = std::to_string(ds.labels[r]);
        for (std::size_t c = 0; c < ds.dim(); ++c) k += "|" + cell_str(ds.features.at(r, c));
        keys.push_back(std::move(k));
    }
    return keys;
}

bool same_multiset(const Dataset& a, const Dataset& b) {
    auto ka = row_keys(a), kb = row_keys(b);
    std::sort(ka.begin(), ka.end());
    std::sort(kb.begin(), kb.end());
    return ka == kb;
}

Dataset concat(const Dataset& a, const Dataset& b) {
    Tensor f({a.size() + b.size(), a.dim()});
    std::vector<int> l;
    for (std::size_t r = 0; r < a.size(); ++r)
        for (std::size_t c = 0; c < a.dim(); ++c) f.at(r, c) = a.features.at(r, c);
    for (std::size_t r = 0; r < b.size(); ++r)
        for (std::size_t c = 0; c < b.dim(); ++c) f.at(a.size() + r, c) = b.features.at(r, c);
    l.insert(l.end(), a.labels.begin(), a.labels.end());
    l.insert(l.end(), b.labels.begin(), b.labels.end());
    return make_dataset(std::move(f), std::move(l), a.class_count);
}

}  // namespace

TEST(Csv, LoadsSmallFile) {
    const std::string path = temp_file("unlearn_csv_small.csv");
    {
        std::ofstream out(path);
        out << "a,b,label\n1.5,2.0,0\n-0.25,3,1\n4,5,0\n";
    }
    Dataset ds = load_csv(path, -1, 2);
    EXPECT_EQ(ds.size(), 3u);
    EXPECT_EQ(ds.dim(), 2u);
    EXPECT_EQ(ds.class_count, 2);
    EXPECT_DOUBLE_EQ(ds.features.at(1, 0), -0.25);
    EXPECT_EQ(ds.labels[1], 1);
    fs::remove(path);
}

TEST(Csv, LabelOutOfRangeNamesRow) {
    const std::string path = temp_file("unlearn_csv_badlabel.csv");
    {
        std::ofstream out(path);
        out << "a,label\n1,0\n2,2\n";  // label == class_count on line 3
    }
    try {
        load_csv(path, -1, 2);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    fs::remove(path);
}

TEST(Csv, NonNumericCellNamesRow) {
    const std::string path = temp_file("unlearn_csv_badcell.csv");
    {
        std::ofstream out(path);
        out << "a,label\n1,0\nfoo,1\n";
    }
    try {
        load_csv(path, -1, 2);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("foo"), std::string::npos);
        EXPECT_NE(msg.find("line 3"), std::string::npos);
    }
    fs::remove(path);
}

TEST(Csv, MissingFileThrows) {
    EXPECT_THROW(load_csv("/nonexistent/never.csv", -1, 2), DataError);
}

TEST(Csv, WriteThenLoadIsBitExact) {
    Dataset ds = synth_generate({3, 4, 20, 3.0, 17});
    const std::string path = temp_file("unlearn_csv_roundtrip.csv");
    write_csv(path, ds);
    Dataset back = load_csv(path, -1, 3);
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t i = 0; i < ds.features.size(); ++i)
        EXPECT_EQ(back.features[i], ds.features[i]);  // bit-exact
    EXPECT_EQ(back.labels, ds.labels);
    fs::remove(path);
}

TEST(Csv, LabelColumnCanBeAnywhere) {
    const std::string path = temp_file("unlearn_csv_labelcol.csv");
    {
        std::ofstream out(path);
        out << "label,a,b\n1,1.0,2.0\n0,3.0,4.0\n";
    }
    Dataset ds = load_csv(path, 0, 2);
    EXPECT_EQ(ds.labels[0], 1);
    EXPECT_DOUBLE_EQ(ds.features.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(ds.features.at(1, 1), 4.0);
    fs::remove(path);
}

TEST(Synth, WellSeparatedBlobsAreLearnable) {
    Dataset ds = synth_generate({2, 2, 100, 10.0, 3});
    ModelParams m = train(init_model({2, {32}, 2}, 3), ds, {50, 16, 0.1, 0.0}, 3);
    EXPECT_GE(accuracy(m, ds), 0.99);
}

TEST(Synth, ZeroSeparationIsChanceLevel) {
    Dataset ds = synth_generate({2, 2, 200, 0.0, 4});
    ModelParams m = train(init_model({2, {16}, 2}, 4), ds, {30, 32, 0.1, 0.0}, 4);
    Dataset fresh = synth_generate({2, 2, 200, 0.0, 5});
    EXPECT_NEAR(accuracy(m, fresh), 0.5, 0.1);
}

TEST(Synth, DeterministicPerSeed) {
    Dataset a = synth_generate({3, 3, 10, 2.0, 9});
    Dataset b = synth_generate({3, 3, 10, 2.0, 9});
    EXPECT_TRUE(same_multiset(a, b));
    for (std::size_t i = 0; i < a.features.size(); ++i) EXPECT_EQ(a.features[i], b.features[i]);
    Dataset c = synth_generate({3, 3, 10, 2.0, 10});
    EXPECT_FALSE(same_multiset(a, c));
}

TEST(Synth, PairwiseMeanDistancesEqualSeparation) {
    // Means are recovered as per-class feature averages; with many samples the
    // empirical means sit close to the designed ones.
    Dataset ds = synth_generate({4, 5, 4000, 7.0, 21});
    std::vector<std::vector<double>> mean(4, std::vector<double>(5, 0.0));
    std::vector<int> count(4, 0);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        const int c = ds.labels[r];
        ++count[c];
        for (std::size_t j = 0; j < 5; ++j) mean[c][j] += ds.features.at(r, j);
    }
    for (int c = 0; c < 4; ++c)
        for (std::size_t j = 0; j < 5; ++j) mean[c][j] /= count[c];
    for (int a = 0; a < 4; ++a) {
        for (int b = a + 1; b < 4; ++b) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                const double d = mean[a][j] - mean[b][j];
                d2 += d * d;
            }
            EXPECT_NEAR(std::sqrt(d2), 7.0, 0.15);
        }
    }
}

TEST(Synth, RejectsImpossibleConfigs) {
    EXPECT_THROW(synth_generate({0, 2, 10, 1.0, 0}), ConfigError);
    EXPECT_THROW(synth_generate({4, 2, 10, 1.0, 0}), ConfigError);  // 4 classes need dims >= 4
}

TEST(Bundle, SampleLevelSizesFollowRounding) {
    Dataset train = synth_generate({2, 2, 50, 5.0, 1});  // N = 100
    Dataset test = synth_generate({2, 2, 20, 5.0, 2});
    SplitBundle b = make_bundle(train, test, UnlearnRequest::sample_level(0.05, 7));
    EXPECT_EQ(b.d_f.size(), 5u);
    EXPECT_EQ(b.d_r.size(), 95u);
    EXPECT_EQ(b.d_r_alt.size(), 19u);  // round(0.2 * 95)
    EXPECT_EQ(b.d_third.size(), 20u);  // round(0.5 * 40)
    EXPECT_EQ(b.d_eval.size(), 20u);
}

TEST(Bundle, ClassLevelTakesExactlyThatClass) {
    Dataset train = synth_generate({3, 3, 30, 5.0, 1});
    Dataset test = synth_generate({3, 3, 10, 5.0, 2});
    SplitBundle b = make_bundle(train, test, UnlearnRequest::class_level(1, 7));
    EXPECT_EQ(b.d_f.size(), 30u);
    for (int l : b.d_f.labels) EXPECT_EQ(l, 1);
    for (int l : b.d_r.labels) EXPECT_NE(l, 1);
    EXPECT_TRUE(same_multiset(concat(b.d_f, b.d_r), train));
}

TEST(Bundle, PartitionHoldsAcrossSeedsAndModes) {
    Dataset train = synth_generate({3, 3, 40, 4.0, 11});
    Dataset test = synth_generate({3, 3, 15, 4.0, 12});
    auto train_keys = row_keys(train);
    std::sort(train_keys.begin(), train_keys.end());
    std::set<std::string> train_set(train_keys.begin(), train_keys.end());

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        UnlearnRequest req = (seed % 2 == 0)
                                 ? UnlearnRequest::sample_level(0.01 + 0.004 * seed, seed)
                                 : UnlearnRequest::class_level(static_cast<int>(seed % 3), seed);
        SplitBundle b = make_bundle(train, test, req);
        // d_f multiset-union d_r == d_train
        EXPECT_TRUE(same_multiset(concat(b.d_f, b.d_r), train)) << "seed " << seed;
        // d_r_alt sits inside d_r with the documented size
        EXPECT_EQ(b.d_r_alt.size(), round_half_up(0.2 * static_cast<double>(b.d_r.size())));
        auto r_keys = row_keys(b.d_r);
        std::set<std::string> r_set(r_keys.begin(), r_keys.end());
        for (const std::string& k : row_keys(b.d_r_alt)) EXPECT_TRUE(r_set.count(k));
        // d_third is disjoint from the training rows
        for (const std::string& k : row_keys(b.d_third)) EXPECT_FALSE(train_set.count(k));
        // d_third + d_eval partition the test set
        EXPECT_TRUE(same_multiset(concat(b.d_third, b.d_eval), test));
    }
}

TEST(Bundle, DeterministicPerRequest) {
    Dataset train = synth_generate({2, 2, 60, 4.0, 3});
    Dataset test = synth_generate({2, 2, 30, 4.0, 4});
    UnlearnRequest req = UnlearnRequest::sample_level(0.1, 42);
    SplitBundle a = make_bundle(train, test, req);
    SplitBundle b = make_bundle(train, test, req);
    EXPECT_EQ(row_keys(a.d_f), row_keys(b.d_f));
    EXPECT_EQ(row_keys(a.d_r_alt), row_keys(b.d_r_alt));
    EXPECT_EQ(row_keys(a.d_third), row_keys(b.d_third));
    SplitBundle c = make_bundle(train, test, UnlearnRequest::sample_level(0.1, 43));
    EXPECT_NE(row_keys(a.d_f), row_keys(c.d_f));
}

TEST(Bundle, Errors) {
    Dataset train = synth_generate({2, 2, 50, 4.0, 3});
    Dataset test = synth_generate({2, 2, 20, 4.0, 4});
    // rate so small it selects nothing
    EXPECT_THROW(make_bundle(train, test, UnlearnRequest::sample_level(0.001, 1)), DataError);
    // class not present
    EXPECT_THROW(make_bundle(train, test, UnlearnRequest::class_level(5, 1)), DataError);
    // invalid fractions
    EXPECT_THROW(make_bundle(train, test, UnlearnRequest::sample_level(0.1, 1), 0.2, 0.0),
                 ConfigError);
    EXPECT_THROW(make_bundle(train, test, UnlearnRequest::sample_level(1.5, 1)), ConfigError);
}

TEST(Split, TrainTestIsDeterministicPartition) {
    Dataset ds = synth_generate({2, 3, 100, 3.0, 8});
    auto [tr1, te1] = split_train_test(ds, 0.3, 5);
    auto [tr2, te2] = split_train_test(ds, 0.3, 5);
    EXPECT_EQ(row_keys(tr1), row_keys(tr2));
    EXPECT_EQ(te1.size(), 60u);  // round(0.3 * 200)
    EXPECT_TRUE(same_multiset(concat(tr1, te1), ds));
}
