#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "unlearn/errors.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

// Labeled classification data: N x d features plus integer labels in [0, C).
struct Dataset {
    Tensor features;          // rank 2, rows are samples
    std::vector<int> labels;  // size N
    int class_count = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }
    bool empty() const { return labels.empty(); }
};

inline Dataset make_dataset(Tensor features, std::vector<int> labels, int class_count) {
    if (features.rank() != 2 || features.rows() != labels.size() || labels.empty()) {
        throw DataError("make_dataset: features " + features.shape_string() + " vs " +
                        std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count) {
            throw DataError("make_dataset: label " + std::to_string(labels[i]) +
                            " out of range [0," + std::to_string(class_count) + ") at row " +
                            std::to_string(i));
        }
    }
    ensure_finite(features, "make_dataset");
    return Dataset{std::move(features), std::move(labels), class_count};
}

inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
    const std::size_t d = ds.dim();
    Tensor feats({indices.size(), d});
    std::vector<int> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t r = indices[i];
        for (std::size_t c = 0; c < d; ++c) feats.at(i, c) = ds.features.at(r, c);
        labels[i] = ds.labels[r];
    }
    return Dataset{std::move(feats), std::move(labels), ds.class_count};
}

// Subset sizes use round-half-up so e.g. |D_r'| is unambiguous.
inline std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

// ---- CSV -------------------------------------------------------------------
// Format: comma-separated, one header row, numeric cells; the label column is
// the last one unless label_column names another (0-based).

// Shortest decimal form that parses back to the same double.
inline std::string cell_str(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline Dataset load_csv(const std::string& path, int label_column, int class_count) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("load_csv: cannot open " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("load_csv: " + path + " is empty (header row required)");
    }
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t ncols = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw DataError("load_csv: non-numeric cell '" + cell + "' at " + path +
                                " line " + std::to_string(lineno));
            }
            while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
                ++used;
            if (used != cell.size()) {
                throw DataError("load_csv: non-numeric cell '" + cell + "' at " + path +
                                " line " + std::to_string(lineno));
            }
            cells.push_back(v);
        }
        if (ncols == 0) {
            ncols = cells.size();
            if (ncols < 2) {
                throw DataError("load_csv: need at least one feature and a label column");
            }
        } else if (cells.size() != ncols) {
            throw DataError("load_csv: ragged row at " + path + " line " +
                            std::to_string(lineno));
        }
        const std::size_t lc = label_column < 0 ? ncols - 1 : static_cast<std::size_t>(label_column);
        if (lc >= ncols) {
            throw DataError("load_csv: label column " + std::to_string(label_column) +
                            " out of range for " + std::to_string(ncols) + " columns");
        }
        const double lv = cells[lc];
        const int label = static_cast<int>(std::llround(lv));
        if (static_cast<double>(label) != lv || label < 0 || label >= class_count) {
            throw DataError("load_csv: label " + cell_str(lv) + " out of range [0," +
                            std::to_string(class_count) + ") at " + path + " line " +
                            std::to_string(lineno));
        }
        cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(lc));
        rows.push_back(std::move(cells));
        labels.push_back(label);
    }
    if (rows.empty()) {
        throw DataError("load_csv: no data rows in " + path);
    }
    Tensor feats({rows.size(), ncols - 1});
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c + 1 < ncols; ++c) feats.at(r, c) = rows[r][c];
    return make_dataset(std::move(feats), std::move(labels), class_count);
}

// Features are printed with 17 significant digits, which round-trips doubles
// exactly through load_csv.
inline void write_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("write_csv: cannot open " + path + " for writing");
    }
    for (std::size_t c = 0; c < ds.dim(); ++c) out << "f" << c << ",";
    out << "label\n";
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < ds.dim(); ++c) out << cell_str(ds.features.at(r, c)) << ",";
        out << ds.labels[r] << "\n";
    }
}

// ---- synthetic blobs ---------------------------------------------------------

struct SynthSpec {
    int classes = 2;
    int dims = 2;
    int per_class = 100;
    double separation = 6.0;
    std::uint64_t seed = 0;
    double label_noise = 0.0;  // fraction of labels flipped to a random other class
};

// Gaussian blobs (unit variance) with one mean per class, all pairwise mean
// distances exactly equal to `separation`. Two classes sit at +-sep/2 along
// the first axis; C > 2 classes use scaled basis vectors, which needs
// dims >= classes.
inline Dataset synth_generate(const SynthSpec& spec) {
    if (spec.classes < 1 || spec.dims < 1 || spec.per_class < 1) {
        throw ConfigError("synth_generate: classes, dims and per_class must be >= 1");
    }
    if (spec.separation < 0.0) {
        throw ConfigError("synth_generate: separation must be non-negative");
    }
    if (spec.label_noise < 0.0 || spec.label_noise >= 1.0) {
        throw ConfigError("synth_generate: label_noise must be in [0,1)");
    }
    std::vector<std::vector<double>> means(spec.classes, std::vector<double>(spec.dims, 0.0));
    if (spec.separation > 0.0 && spec.classes == 2) {
        means[0][0] = -spec.separation / 2.0;
        means[1][0] = spec.separation / 2.0;
    } else if (spec.separation > 0.0 && spec.classes > 2) {
        if (spec.dims < spec.classes) {
            throw ConfigError("synth_generate: " + std::to_string(spec.classes) +
                              " equidistant classes need dims >= classes, got dims=" +
                              std::to_string(spec.dims));
        }
        const double scale = spec.separation / std::sqrt(2.0);
        for (int c = 0; c < spec.classes; ++c) means[c][c] = scale;
    }
    const std::size_t n = static_cast<std::size_t>(spec.classes) * spec.per_class;
    Tensor feats({n, static_cast<std::size_t>(spec.dims)});
    std::vector<int> labels(n);
    auto rng = substream_rng(spec.seed, "synth");
    std::normal_distribution<double> noise(0.0, 1.0);
    std::size_t row = 0;
    for (int c = 0; c < spec.classes; ++c) {
        for (int i = 0; i < spec.per_class; ++i, ++row) {
            for (int d = 0; d < spec.dims; ++d)
                feats.at(row, d) = means[c][d] + noise(rng);
            labels[row] = c;
        }
    }
    if (spec.label_noise > 0.0 && spec.classes > 1) {
        auto noise_rng = substream_rng(spec.seed, "synth-noise");
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        std::uniform_int_distribution<int> other(0, spec.classes - 2);
        for (std::size_t i = 0; i < n; ++i) {
            if (coin(noise_rng) < spec.label_noise) {
                const int shift = other(noise_rng);
                labels[i] = (labels[i] + 1 + shift) % spec.classes;
            }
        }
    }
    return make_dataset(std::move(feats), std::move(labels), spec.classes);
}

// Deterministic shuffled split into train/test.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction,
                                                    std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0) {
        throw ConfigError("split_train_test: test_fraction must be in (0,1)");
    }
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = substream_rng(seed, "train-test-split");
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t ntest = round_half_up(test_fraction * static_cast<double>(ds.size()));
    if (ntest == 0 || ntest >= ds.size()) {
        throw DataError("split_train_test: split leaves an empty side (N=" +
                        std::to_string(ds.size()) + ")");
    }
    std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(ntest));
    std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(ntest), idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    return {subset(ds, train_idx), subset(ds, test_idx)};
}

// ---- unlearning splits -------------------------------------------------------

struct UnlearnRequest {
    enum class Mode { kSampleLevel, kClassLevel };
    Mode mode = Mode::kSampleLevel;
    double rate = 0.01;  // sample-level: fraction of D_train to forget
    int class_id = 0;    // class-level: class whose rows are forgotten
    std::uint64_t seed = 0;

    static UnlearnRequest sample_level(double rate, std::uint64_t seed) {
        return UnlearnRequest{Mode::kSampleLevel, rate, 0, seed};
    }
    static UnlearnRequest class_level(int class_id, std::uint64_t seed) {
        return UnlearnRequest{Mode::kClassLevel, 0.0, class_id, seed};
    }

    std::string describe() const {
        if (mode == Mode::kSampleLevel) {
            return "sample-level rate=" + cell_str(rate);
        }
        return "class-level class=" + std::to_string(class_id);
    }
};

// Every data role the method needs in one place. d_f and d_r partition
// d_train; d_r_alt is the alternative-model subset of d_r; d_third and d_eval
// partition d_test, so fidelity target and reported accuracy never share
// samples.
struct SplitBundle {
    Dataset d_train;
    Dataset d_test;
    Dataset d_f;
    Dataset d_r;
    Dataset d_r_alt;
    Dataset d_third;
    Dataset d_eval;
    UnlearnRequest request;
};

namespace detail {

inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace detail

inline SplitBundle make_bundle(const Dataset& train, const Dataset& test,
                               const UnlearnRequest& req, double alt_fraction = 0.2,
                               double third_fraction = 0.5) {
    if (third_fraction <= 0.0 || third_fraction > 1.0) {
        throw ConfigError("make_bundle: third_fraction must be in (0,1]");
    }
    if (alt_fraction <= 0.0 || alt_fraction > 1.0) {
        throw ConfigError("make_bundle: alt_fraction must be in (0,1]");
    }

    std::vector<std::size_t> f_idx;
    if (req.mode == UnlearnRequest::Mode::kSampleLevel) {
        if (req.rate <= 0.0 || req.rate >= 1.0) {
            throw ConfigError("make_bundle: unlearning rate must be in (0,1), got " +
                              cell_str(req.rate));
        }
        const std::size_t k = round_half_up(req.rate * static_cast<double>(train.size()));
        if (k == 0) {
            throw DataError("make_bundle: rate " + cell_str(req.rate) + " selects 0 of " +
                            std::to_string(train.size()) + " samples");
        }
        if (k >= train.size()) {
            throw DataError("make_bundle: rate " + cell_str(req.rate) +
                            " would empty the retain set");
        }
        auto rng = substream_rng(req.seed, "split-forget");
        f_idx = detail::sample_without_replacement(train.size(), k, rng);
    } else {
        for (std::size_t i = 0; i < train.size(); ++i)
            if (train.labels[i] == req.class_id) f_idx.push_back(i);
        if (f_idx.empty()) {
            throw DataError("make_bundle: class " + std::to_string(req.class_id) +
                            " not present in training set");
        }
        if (f_idx.size() == train.size()) {
            throw DataError("make_bundle: forgetting class " + std::to_string(req.class_id) +
                            " would empty the retain set");
        }
    }

    std::vector<char> forget(train.size(), 0);
    for (std::size_t i : f_idx) forget[i] = 1;
    std::vector<std::size_t> r_idx;
    r_idx.reserve(train.size() - f_idx.size());
    for (std::size_t i = 0; i < train.size(); ++i)
        if (!forget[i]) r_idx.push_back(i);

    const std::size_t n_alt = round_half_up(alt_fraction * static_cast<double>(r_idx.size()));
    if (n_alt == 0) {
        throw DataError("make_bundle: alternative-model subset is empty (|d_r|=" +
                        std::to_string(r_idx.size()) + ")");
    }
    auto alt_rng = substream_rng(req.seed, "split-alt");
    auto alt_pick = detail::sample_without_replacement(r_idx.size(), n_alt, alt_rng);
    std::vector<std::size_t> alt_idx;
    alt_idx.reserve(n_alt);
    for (std::size_t i : alt_pick) alt_idx.push_back(r_idx[i]);

    const std::size_t n_third = round_half_up(third_fraction * static_cast<double>(test.size()));
    if (n_third == 0) {
        throw DataError("make_bundle: third-party subset is empty (|test|=" +
                        std::to_string(test.size()) + ")");
    }
    auto third_rng = substream_rng(req.seed, "split-third");
    auto third_idx = detail::sample_without_replacement(test.size(), n_third, third_rng);
    std::vector<char> in_third(test.size(), 0);
    for (std::size_t i : third_idx) in_third[i] = 1;
    std::vector<std::size_t> eval_idx;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (!in_third[i]) eval_idx.push_back(i);

    SplitBundle b;
    b.d_train = train;
    b.d_test = test;
    b.d_f = subset(train, f_idx);
    b.d_r = subset(train, r_idx);
    b.d_r_alt = subset(train, alt_idx);
    b.d_third = subset(test, third_idx);
    b.d_eval = eval_idx.empty() ? Dataset{} : subset(test, eval_idx);
    b.request = req;
    return b;
}

}  // namespace unlearn
