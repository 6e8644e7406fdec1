// Toy decoder-only transformer: parameter containers, seeded initialisation,
// rotation sets and the folded parameter variant, plus directory I/O.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zdc/matrix.hpp"
#include "zdc/matrix_io.hpp"

namespace zdc {

struct ModelDims {
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t head_dim = 8;
    std::size_t vocab = 256;
    std::size_t ffn_dim = 64;

    std::size_t model_dim() const { return n_heads * head_dim; }
    bool operator==(const ModelDims&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelDims& d) {
    j = nlohmann::json{{"n_layers", d.n_layers}, {"n_heads", d.n_heads}, {"head_dim", d.head_dim},
                       {"vocab", d.vocab},       {"ffn_dim", d.ffn_dim}, {"model_dim", d.model_dim()}};
}

inline void from_json(const nlohmann::json& j, ModelDims& d) {
    j.at("n_layers").get_to(d.n_layers);
    j.at("n_heads").get_to(d.n_heads);
    j.at("head_dim").get_to(d.head_dim);
    j.at("vocab").get_to(d.vocab);
    j.at("ffn_dim").get_to(d.ffn_dim);
}

struct HeadWeights {
    Matrix wq;  ///< d x d_h
    Matrix wk;  ///< d x d_h
    Matrix wv;  ///< d x d_h
};

struct LayerWeights {
    std::vector<HeadWeights> heads;
    Matrix wl;       ///< d x d; rows [h*d_h, (h+1)*d_h) belong to head h
    Matrix mlp_in;   ///< d x ffn
    Matrix mlp_out;  ///< ffn x d
};

struct ToyModel {
    ModelDims dims;
    Matrix embedding;  ///< vocab x d
    std::vector<LayerWeights> layers;
    Matrix output;     ///< d x vocab
    std::uint64_t seed = 0;

    /// Throws if any parameter shape disagrees with dims.
    void validate() const {
        const std::size_t d = dims.model_dim();
        auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const std::string& what) {
            if (m.rows() != r || m.cols() != c) {
                throw std::invalid_argument("model: " + what + " is " + m.shape() + ", expected " +
                                            std::to_string(r) + "x" + std::to_string(c));
            }
        };
        if (dims.n_layers == 0 || dims.n_heads == 0 || dims.head_dim == 0 || dims.vocab == 0) {
            throw std::invalid_argument("model: zero dimension");
        }
        expect(embedding, dims.vocab, d, "embedding");
        expect(output, d, dims.vocab, "output head");
        if (layers.size() != dims.n_layers) throw std::invalid_argument("model: layer count mismatch");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& L = layers[l];
            const std::string tag = "layer " + std::to_string(l);
            if (L.heads.size() != dims.n_heads) throw std::invalid_argument("model: head count mismatch in " + tag);
            for (const auto& h : L.heads) {
                expect(h.wq, d, dims.head_dim, tag + " W_Q");
                expect(h.wk, d, dims.head_dim, tag + " W_K");
                expect(h.wv, d, dims.head_dim, tag + " W_V");
            }
            expect(L.wl, d, d, tag + " W_L");
            expect(L.mlp_in, d, dims.ffn_dim, tag + " mlp_in");
            expect(L.mlp_out, dims.ffn_dim, d, tag + " mlp_out");
        }
    }
};

/// Per-(layer, head) rotation pair with the singular values that produced it.
struct HeadRotation {
    Matrix r_qk;
    Matrix r_vl;
    std::vector<double> sv_qk;
    std::vector<double> sv_vl;
};

struct RotationSet {
    ModelDims dims;
    std::vector<HeadRotation> heads;  ///< index layer * n_heads + head

    HeadRotation& at(std::size_t layer, std::size_t head) { return heads.at(layer * dims.n_heads + head); }
    const HeadRotation& at(std::size_t layer, std::size_t head) const {
        return heads.at(layer * dims.n_heads + head);
    }

    static RotationSet identity(const ModelDims& dims) {
        RotationSet rs{dims, {}};
        const std::vector<double> ones(dims.head_dim, 1.0);
        for (std::size_t i = 0; i < dims.n_layers * dims.n_heads; ++i) {
            rs.heads.push_back({Matrix::identity(dims.head_dim), Matrix::identity(dims.head_dim), ones, ones});
        }
        return rs;
    }
};

/// Model whose attention parameters have the per-head rotations folded in:
/// wq = W_Q R_qk, wk = W_K R_qk, wv = W_V R_vl and the head-h row block of wl
/// is R_vl^T W_L^h. Everything else is copied from the base model.
struct FoldedModel {
    ToyModel params;
    RotationSet rotations;
};

struct ModelInit {
    std::uint64_t seed = 1;
    double qk_scale = 2.5;         ///< leading singular value of W_Q / W_K heads
    double v_scale = 3.0;
    double out_scale = 2.0;        ///< leading singular value of W_L head blocks
    double spectral_decay = 0.7;   ///< ratio between consecutive head singular values
    double mlp_scale = 0.5;
    double logit_scale = 3.0;
    double layer_share = 0.0;      ///< blend of the previous layer's W_Q/W_K input basis, in [0,1]
};

namespace detail {

inline Matrix gaussian(std::size_t r, std::size_t c, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, stddev);
    Matrix m(r, c);
    for (double& v : m.data()) v = n(rng);
    return m;
}

/// Orthonormalises the columns left to right (modified Gram-Schmidt, two passes).
inline Matrix orthonormalize_columns(Matrix q) {
    const std::size_t rows = q.rows();
    for (std::size_t c = 0; c < q.cols(); ++c) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t o = 0; o < c; ++o) {
                double dot = 0.0;
                for (std::size_t i = 0; i < rows; ++i) dot += q(i, o) * q(i, c);
                for (std::size_t i = 0; i < rows; ++i) q(i, c) -= dot * q(i, o);
            }
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < rows; ++i) norm += q(i, c) * q(i, c);
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < rows; ++i) q(i, c) /= norm;
    }
    return q;
}

/// rows x cols with orthonormal columns from a Gaussian draw.
inline Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    if (cols > rows) throw std::invalid_argument("random_orthonormal: cols > rows");
    return orthonormalize_columns(gaussian(rows, cols, 1.0, rng));
}

/// left (a x k) * diag(s) * right^T (b x k)^T
inline Matrix compose_spectrum(const Matrix& left, const std::vector<double>& s, const Matrix& right) {
    Matrix ls = left;
    for (std::size_t i = 0; i < ls.rows(); ++i)
        for (std::size_t k = 0; k < ls.cols(); ++k) ls(i, k) *= s[k];
    return matmul_transposed(ls, right);
}

/// Orthonormal basis near `prev`: orthonormalised share*prev + (1-share)*fresh.
inline Matrix blended_basis(const Matrix* prev, double share, std::size_t rows, std::size_t cols,
                            std::mt19937_64& rng) {
    Matrix fresh = random_orthonormal(rows, cols, rng);
    if (!prev || share <= 0.0) return fresh;
    return orthonormalize_columns(add(scaled(*prev, share), scaled(fresh, 1.0 - share)));
}

inline std::vector<double> decaying(std::size_t n, double lead, double decay) {
    std::vector<double> s(n);
    double v = lead;
    for (auto& x : s) {
        x = v;
        v *= decay;
    }
    return s;
}

}  // namespace detail

/// Seeded scaled-Gaussian initialisation. Each head's W_Q and W_K share a
/// right basis, as do W_V and the head's W_L row block, and every head matrix
/// has a geometrically decaying spectrum so rotated dimensions carry
/// decreasing energy.
inline ToyModel init_model(const ModelDims& dims, const ModelInit& init) {
    std::mt19937_64 rng(init.seed);
    const std::size_t d = dims.model_dim();
    const std::size_t dh = dims.head_dim;
    ToyModel m;
    m.dims = dims;
    m.seed = init.seed;
    m.embedding = detail::gaussian(dims.vocab, d, 1.0, rng);
    const auto s_qk = detail::decaying(dh, init.qk_scale, init.spectral_decay);
    const auto s_v = detail::decaying(dh, init.v_scale, init.spectral_decay);
    const auto s_o = detail::decaying(dh, init.out_scale, init.spectral_decay);
    if (!(init.layer_share >= 0.0 && init.layer_share <= 1.0)) throw std::invalid_argument("layer_share must be in [0,1]");
    std::vector<Matrix> prev_q, prev_k;
    for (std::size_t l = 0; l < dims.n_layers; ++l) {
        LayerWeights L;
        L.wl = Matrix(d, d);
        for (std::size_t h = 0; h < dims.n_heads; ++h) {
            const Matrix basis_qk = detail::random_orthonormal(dh, dh, rng);
            const Matrix basis_vl = detail::random_orthonormal(dh, dh, rng);
            HeadWeights hw;
            const bool has_prev = l > 0;
            Matrix left_q = detail::blended_basis(has_prev ? &prev_q[h] : nullptr, init.layer_share, d, dh, rng);
            Matrix left_k = detail::blended_basis(has_prev ? &prev_k[h] : nullptr, init.layer_share, d, dh, rng);
            hw.wq = detail::compose_spectrum(left_q, s_qk, basis_qk);
            hw.wk = detail::compose_spectrum(left_k, s_qk, basis_qk);
            if (has_prev) {
                prev_q[h] = std::move(left_q);
                prev_k[h] = std::move(left_k);
            } else {
                prev_q.push_back(std::move(left_q));
                prev_k.push_back(std::move(left_k));
            }
            hw.wv = detail::compose_spectrum(detail::random_orthonormal(d, dh, rng), s_v, basis_vl);
            // Head block of W_L is d_h x d: basis_vl * diag(s_o) * out^T.
            const Matrix block =
                detail::compose_spectrum(basis_vl, s_o, detail::random_orthonormal(d, dh, rng));
            for (std::size_t i = 0; i < dh; ++i)
                for (std::size_t j = 0; j < d; ++j) L.wl(h * dh + i, j) = block(i, j);
            L.heads.push_back(std::move(hw));
        }
        L.mlp_in = detail::gaussian(d, dims.ffn_dim, init.mlp_scale / std::sqrt(double(d)), rng);
        L.mlp_out = detail::gaussian(dims.ffn_dim, d, init.mlp_scale / std::sqrt(double(dims.ffn_dim)), rng);
        m.layers.push_back(std::move(L));
    }
    m.output = detail::gaussian(d, dims.vocab, init.logit_scale / std::sqrt(double(d)), rng);
    m.validate();
    return m;
}

/// Row block of W_L owned by `head`, transposed to d x d_h so its rows can be
/// stacked under the head's V rows.
inline Matrix wl_head_rows(const ToyModel& m, std::size_t layer, std::size_t head) {
    const std::size_t dh = m.dims.head_dim;
    return transpose(slice_rows(m.layers.at(layer).wl, head * dh, (head + 1) * dh));
}

// ---------------------------------------------------------------------------
// Directory I/O. Every matrix is a ZDCM file; manifest.json carries dims.

namespace detail {

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw std::runtime_error("cannot read " + p.string());
    return nlohmann::json::parse(is);
}

inline std::string lh(std::size_t l, std::size_t h) {
    return "l" + std::to_string(l) + "_h" + std::to_string(h);
}

inline void save_params(const std::filesystem::path& dir, const ToyModel& m) {
    save_zdcm(dir / "embedding.zdcm", m.embedding);
    save_zdcm(dir / "output.zdcm", m.output);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& L = m.layers[l];
        const std::string ls = "l" + std::to_string(l);
        for (std::size_t h = 0; h < L.heads.size(); ++h) {
            save_zdcm(dir / (lh(l, h) + "_wq.zdcm"), L.heads[h].wq);
            save_zdcm(dir / (lh(l, h) + "_wk.zdcm"), L.heads[h].wk);
            save_zdcm(dir / (lh(l, h) + "_wv.zdcm"), L.heads[h].wv);
        }
        save_zdcm(dir / (ls + "_wl.zdcm"), L.wl);
        save_zdcm(dir / (ls + "_mlp_in.zdcm"), L.mlp_in);
        save_zdcm(dir / (ls + "_mlp_out.zdcm"), L.mlp_out);
    }
}

inline ToyModel load_params(const std::filesystem::path& dir, const ModelDims& dims, std::uint64_t seed) {
    ToyModel m;
    m.dims = dims;
    m.seed = seed;
    m.embedding = load_zdcm(dir / "embedding.zdcm");
    m.output = load_zdcm(dir / "output.zdcm");
    for (std::size_t l = 0; l < dims.n_layers; ++l) {
        LayerWeights L;
        const std::string ls = "l" + std::to_string(l);
        for (std::size_t h = 0; h < dims.n_heads; ++h) {
            L.heads.push_back({load_zdcm(dir / (lh(l, h) + "_wq.zdcm")), load_zdcm(dir / (lh(l, h) + "_wk.zdcm")),
                               load_zdcm(dir / (lh(l, h) + "_wv.zdcm"))});
        }
        L.wl = load_zdcm(dir / (ls + "_wl.zdcm"));
        L.mlp_in = load_zdcm(dir / (ls + "_mlp_in.zdcm"));
        L.mlp_out = load_zdcm(dir / (ls + "_mlp_out.zdcm"));
        m.layers.push_back(std::move(L));
    }
    m.validate();
    return m;
}

}  // namespace detail

inline void save_model(const std::filesystem::path& dir, const ToyModel& m) {
    std::filesystem::create_directories(dir);
    detail::write_json(dir / "manifest.json", {{"kind", "toy_model"}, {"dims", m.dims}, {"seed", m.seed}});
    detail::save_params(dir, m);
}

inline ToyModel load_model(const std::filesystem::path& dir) {
    const auto j = detail::read_json(dir / "manifest.json");
    if (j.at("kind") != "toy_model") throw std::runtime_error(dir.string() + " is not a toy_model directory");
    return detail::load_params(dir, j.at("dims").get<ModelDims>(), j.at("seed").get<std::uint64_t>());
}

inline void save_rotations(const std::filesystem::path& dir, const RotationSet& rs, const nlohmann::json& extra = {}) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest{{"kind", "rotation_set"}, {"dims", rs.dims}};
    for (auto it = extra.begin(); extra.is_object() && it != extra.end(); ++it) manifest[it.key()] = it.value();
    detail::write_json(dir / "manifest.json", manifest);
    for (std::size_t l = 0; l < rs.dims.n_layers; ++l) {
        for (std::size_t h = 0; h < rs.dims.n_heads; ++h) {
            const auto& r = rs.at(l, h);
            const std::string base = detail::lh(l, h);
            save_zdcm(dir / (base + "_r_qk.zdcm"), r.r_qk);
            save_zdcm(dir / (base + "_r_vl.zdcm"), r.r_vl);
            save_zdcm(dir / (base + "_sv_qk.zdcm"), as_row(r.sv_qk));
            save_zdcm(dir / (base + "_sv_vl.zdcm"), as_row(r.sv_vl));
        }
    }
}

inline RotationSet load_rotations(const std::filesystem::path& dir) {
    const auto j = detail::read_json(dir / "manifest.json");
    RotationSet rs{j.at("dims").get<ModelDims>(), {}};
    for (std::size_t l = 0; l < rs.dims.n_layers; ++l) {
        for (std::size_t h = 0; h < rs.dims.n_heads; ++h) {
            const std::string base = detail::lh(l, h);
            rs.heads.push_back({load_zdcm(dir / (base + "_r_qk.zdcm")), load_zdcm(dir / (base + "_r_vl.zdcm")),
                                load_zdcm(dir / (base + "_sv_qk.zdcm")).data(),
                                load_zdcm(dir / (base + "_sv_vl.zdcm")).data()});
        }
    }
    return rs;
}

/// Folded directory: manifest + folded parameters + the rotations used.
inline void save_folded(const std::filesystem::path& dir, const FoldedModel& f) {
    std::filesystem::create_directories(dir);
    detail::write_json(dir / "manifest.json",
                       {{"kind", "folded_model"}, {"dims", f.params.dims}, {"seed", f.params.seed}});
    detail::save_params(dir, f.params);
    save_rotations(dir / "rotations", f.rotations);
}

inline FoldedModel load_folded(const std::filesystem::path& dir) {
    const auto j = detail::read_json(dir / "manifest.json");
    if (j.at("kind") != "folded_model") throw std::runtime_error(dir.string() + " is not a folded_model directory");
    FoldedModel f;
    f.params = detail::load_params(dir, j.at("dims").get<ModelDims>(), j.at("seed").get<std::uint64_t>());
    f.rotations = load_rotations(dir / "rotations");
    return f;
}

}  // namespace zdc
