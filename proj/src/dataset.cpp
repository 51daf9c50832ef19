#include "icmpc/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace icmpc {

void Dataset::assign_splits(double train_frac, double val_frac, std::uint64_t seed)
{
    if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0)
        throw std::invalid_argument("assign_splits: invalid fractions");
    const int n = rows();
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);

    const int n_train = static_cast<int>(std::llround(train_frac * n));
    const int n_val = static_cast<int>(std::llround(val_frac * n));
    split.assign(n, Split::test);
    for (int i = 0; i < n; ++i) {
        if (i < n_train)
            split[idx[i]] = Split::train;
        else if (i < n_train + n_val)
            split[idx[i]] = Split::val;
    }
}

int Dataset::count_of(Split s) const
{
    int c = 0;
    for (auto t : split)
        if (t == s) ++c;
    return c;
}

Mat Dataset::select_rows(const Mat& src, Split s) const
{
    if (split.size() != static_cast<std::size_t>(rows()))
        throw std::runtime_error("Dataset: splits not assigned");
    Mat out(count_of(s), src.cols());
    int r = 0;
    for (int i = 0; i < rows(); ++i)
        if (split[i] == s) out.row(r++) = src.row(i);
    return out;
}

Dataset Dataset::abs_labels() const
{
    Dataset d = *this;
    d.labels = labels.cwiseAbs();
    return d;
}

std::vector<std::string> Dataset::column_names() const
{
    std::vector<std::string> names;
    for (int i = 0; i < state_dim; ++i) names.push_back("x" + std::to_string(i + 1));
    for (int k = 0; k < hold_steps; ++k)
        for (int i = 0; i < input_dim; ++i)
            names.push_back("u" + std::to_string(i + 1) + "_k" + std::to_string(k));
    for (int i = 0; i < state_dim; ++i) names.push_back("y" + std::to_string(i + 1));
    return names;
}

void Dataset::write_csv(const std::string& path) const
{
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("write_csv: cannot open " + path);
    auto names = column_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        std::fprintf(f, "%s%s", names[i].c_str(), i + 1 < names.size() ? "," : "\n");
    for (int r = 0; r < rows(); ++r) {
        for (int c = 0; c < samples.cols(); ++c) std::fprintf(f, "%.17g,", samples(r, c));
        for (int c = 0; c < labels.cols(); ++c)
            std::fprintf(f, "%.17g%s", labels(r, c), c + 1 < labels.cols() ? "," : "\n");
    }
    std::fclose(f);
}

Dataset Dataset::read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file " + path);

    // parse header to recover the column layout
    std::vector<std::string> names;
    {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) names.push_back(tok);
    }
    int n_x = 0, n_u = 0, n_y = 0;
    for (const auto& s : names) {
        if (s.rfind("x", 0) == 0)
            ++n_x;
        else if (s.rfind("u", 0) == 0)
            ++n_u;
        else if (s.rfind("y", 0) == 0)
            ++n_y;
        else
            throw std::runtime_error("read_csv: unexpected column '" + s + "' in " + path);
    }
    if (n_x == 0 || n_y == 0 || n_x != n_y || n_u == 0)
        throw std::runtime_error("read_csv: malformed header in " + path);
    int hold = 0;
    for (const auto& s : names) {
        auto pos = s.find("_k");
        if (pos != std::string::npos) hold = std::max(hold, std::stoi(s.substr(pos + 2)) + 1);
    }
    if (hold == 0 || n_u % hold != 0)
        throw std::runtime_error("read_csv: inconsistent input columns in " + path);

    std::vector<std::vector<double>> data;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
        if (row.size() != names.size())
            throw std::runtime_error("read_csv: ragged row in " + path);
        data.push_back(std::move(row));
    }

    Dataset d;
    d.state_dim = n_x;
    d.input_dim = n_u / hold;
    d.hold_steps = hold;
    d.samples.resize(static_cast<Eigen::Index>(data.size()), n_x + n_u);
    d.labels.resize(static_cast<Eigen::Index>(data.size()), n_y);
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (int c = 0; c < n_x + n_u; ++c) d.samples(static_cast<Eigen::Index>(r), c) = data[r][c];
        for (int c = 0; c < n_y; ++c) d.labels(static_cast<Eigen::Index>(r), c) = data[r][n_x + n_u + c];
    }
    return d;
}

} // namespace icmpc
