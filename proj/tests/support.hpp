#pragma once

// torch-facing helpers shared by the test sources: tensor <-> buffer
// conversion, scratch directories, parameter nudging for difference
// quotients, and a tiny process runner for the command-line binary.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <torch/torch.h>

#include "segadapt/common.hpp"

namespace testutil {

inline std::vector<int> mask_buffer(const torch::Tensor& m) {
    auto t = m.to(torch::kFloat32).contiguous();
    std::vector<int> out(static_cast<std::size_t>(t.numel()));
    const float* p = t.data_ptr<float>();
    for (int64_t i = 0; i < t.numel(); ++i) out[static_cast<std::size_t>(i)] = p[i] > 0.5f;
    return out;
}

inline std::vector<double> plane_buffer(const torch::Tensor& t) {
    auto d = t.to(torch::kFloat64).contiguous();
    const double* p = d.data_ptr<double>();
    return {p, p + d.numel()};
}

inline torch::Tensor random_mask(segadapt::DetRng& rng, int64_t h, int64_t w, double fg_prob) {
    auto m = torch::zeros({h, w}, torch::kFloat32);
    auto acc = m.accessor<float, 2>();
    for (int64_t r = 0; r < h; ++r) {
        for (int64_t c = 0; c < w; ++c) {
            if (rng.uniform() < fg_prob) acc[r][c] = 1.0f;
        }
    }
    return m;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

// read and write one scalar slot of a parameter tensor, bypassing autograd
inline double get_at(const torch::Tensor& p, int64_t idx) {
    return p.detach().view(-1)[idx].item<double>();
}

inline void set_at(torch::Tensor& p, int64_t idx, double value) {
    auto flat = p.detach().view(-1);
    flat.index_put_({idx}, value);
}

// central difference quotient of eval() along one parameter slot
template <typename Eval>
double numeric_grad(Eval&& eval, torch::Tensor& p, int64_t idx, double eps) {
    const double orig = get_at(p, idx);
    set_at(p, idx, orig + eps);
    const double up = eval();
    set_at(p, idx, orig - eps);
    const double down = eval();
    set_at(p, idx, orig);
    return (up - down) / (2.0 * eps);
}

// scratch directory removed on destruction
class TempDir {
public:
    explicit TempDir(const std::string& tag = "segadapt-test") {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0; i < 10000; ++i) {
            auto candidate = base / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(i));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("cannot create scratch directory for " + tag);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& rel = "") const {
        return rel.empty() ? path_.string() : (path_ / rel).string();
    }

private:
    std::filesystem::path path_;
};

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct CmdResult {
    int status = -1;
    std::string output;  // stdout and stderr combined
};

inline CmdResult run_cmd(const std::string& command, const TempDir& scratch) {
    const auto capture = scratch.str("cmd-output.txt");
    const auto full = command + " >" + capture + " 2>&1";
    const int rc = std::system(full.c_str());
    CmdResult result;
    if (rc != -1 && WIFEXITED(rc)) result.status = WEXITSTATUS(rc);
    result.output = read_text(capture);
    return result;
}

// run-directory artifact lookup: out_root/<kind>-<hash>-<stamp>/<name>
inline std::vector<std::filesystem::path> find_files(const std::filesystem::path& root,
                                                     const std::string& name) {
    std::vector<std::filesystem::path> hits;
    if (!std::filesystem::exists(root)) return hits;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
        if (entry.is_regular_file() && entry.path().filename() == name) {
            hits.push_back(entry.path());
        }
    }
    std::sort(hits.begin(), hits.end());
    return hits;
}

}  // namespace testutil
