#include "gridformer/grid.hpp"

#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gridformer/errors.hpp"
#include "gridformer/ops.hpp"
#include "gridformer/serialize.hpp"

namespace gridformer {

void validate_grid_config(const GridConfig& cfg) {
    if (cfg.rows < 1) throw ConfigError("grid: rows must be >= 1");
    if (cfg.fusion_columns < 1) throw ConfigError("grid: fusion_columns must be >= 1");
    if (cfg.base_channels < 1) throw ConfigError("grid: base_channels must be positive");
    if (cfg.growth < 1) throw ConfigError("grid: growth must be positive");
    if (int64_t(cfg.sampler_strides.size()) != cfg.rows)
        throw ConfigError("grid: sampler_strides length " +
                          std::to_string(cfg.sampler_strides.size()) + " != rows " +
                          std::to_string(cfg.rows));
    for (int64_t i = 0; i < cfg.rows; ++i) {
        RdtbConfig rc;
        rc.channels = (int64_t(1) << i) * cfg.base_channels;
        rc.growth = cfg.growth;
        rc.cetls_per_rdtl = cfg.cetls_per_rdtl;
        rc.cetl.sample_stride = cfg.sampler_strides[size_t(i)];
        rc.cetl.heads_per_half = cfg.heads_per_half;
        rc.cetl.ffn_expansion = cfg.ffn_expansion;
        rc.cetl.use_norm = cfg.use_norm;
        rc.cetl.use_feature_sampling = cfg.use_feature_sampling;
        rc.cetl.use_channel_split = cfg.use_channel_split;
        rc.cetl.use_local_enhancement = cfg.use_local_enhancement;
        rc.dense_connections = cfg.dense_connections;
        rc.local_fusion = cfg.local_fusion;
        rc.local_skip = cfg.local_skip;
        validate_rdtb_config(rc);
    }
}

GridConfig preset_config(const std::string& name) {
    GridConfig cfg;
    if (name == "gridformer") return cfg;
    if (name == "gridformer-s") {
        cfg.base_channels = 32;
        return cfg;
    }
    if (name == "tiny") {
        cfg.base_channels = 8;
        cfg.growth = 4;
        cfg.cetls_per_rdtl = 1;
        return cfg;
    }
    if (name == "micro") {
        cfg.base_channels = 8;
        cfg.growth = 4;
        cfg.cetls_per_rdtl = 1;
        cfg.fusion_columns = 2;
        return cfg;
    }
    throw ConfigError("unknown config preset: " + name);
}

bool is_preset_name(const std::string& name) {
    return name == "gridformer" || name == "gridformer-s" || name == "tiny" || name == "micro";
}

KvList grid_config_kv(const GridConfig& cfg) {
    KvList kv;
    kv.set_int("grid.rows", cfg.rows);
    kv.set_int("grid.fusion_columns", cfg.fusion_columns);
    kv.set_int("grid.base_channels", cfg.base_channels);
    kv.set_int("grid.growth", cfg.growth);
    kv.set_int_list("grid.sampler_strides", cfg.sampler_strides);
    kv.set_int("grid.cetls_per_rdtl", cfg.cetls_per_rdtl);
    kv.set_int("grid.heads_per_half", cfg.heads_per_half);
    kv.set_int("grid.ffn_expansion", cfg.ffn_expansion);
    kv.set_bool("grid.use_norm", cfg.use_norm);
    kv.set_bool("grid.use_feature_sampling", cfg.use_feature_sampling);
    kv.set_bool("grid.use_channel_split", cfg.use_channel_split);
    kv.set_bool("grid.use_local_enhancement", cfg.use_local_enhancement);
    kv.set_bool("grid.dense_connections", cfg.dense_connections);
    kv.set_bool("grid.local_fusion", cfg.local_fusion);
    kv.set_bool("grid.local_skip", cfg.local_skip);
    return kv;
}

GridConfig grid_config_from_kv(const KvList& kv) {
    GridConfig d;
    GridConfig cfg;
    cfg.rows = kv.get_int_or("grid.rows", d.rows);
    cfg.fusion_columns = kv.get_int_or("grid.fusion_columns", d.fusion_columns);
    cfg.base_channels = kv.get_int_or("grid.base_channels", d.base_channels);
    cfg.growth = kv.get_int_or("grid.growth", d.growth);
    cfg.sampler_strides =
        kv.has("grid.sampler_strides") ? kv.get_int_list("grid.sampler_strides") : d.sampler_strides;
    if (cfg.rows != d.rows && !kv.has("grid.sampler_strides")) {
        // Default strides are [4,2,2]; other row counts reuse 2 below the
        // first row.
        cfg.sampler_strides.assign(size_t(cfg.rows), 2);
        cfg.sampler_strides[0] = 4;
    }
    cfg.cetls_per_rdtl = kv.get_int_or("grid.cetls_per_rdtl", d.cetls_per_rdtl);
    cfg.heads_per_half = kv.get_int_or("grid.heads_per_half", d.heads_per_half);
    cfg.ffn_expansion = kv.get_int_or("grid.ffn_expansion", d.ffn_expansion);
    cfg.use_norm = kv.get_bool_or("grid.use_norm", d.use_norm);
    cfg.use_feature_sampling = kv.get_bool_or("grid.use_feature_sampling", d.use_feature_sampling);
    cfg.use_channel_split = kv.get_bool_or("grid.use_channel_split", d.use_channel_split);
    cfg.use_local_enhancement =
        kv.get_bool_or("grid.use_local_enhancement", d.use_local_enhancement);
    cfg.dense_connections = kv.get_bool_or("grid.dense_connections", d.dense_connections);
    cfg.local_fusion = kv.get_bool_or("grid.local_fusion", d.local_fusion);
    cfg.local_skip = kv.get_bool_or("grid.local_skip", d.local_skip);
    validate_grid_config(cfg);
    return cfg;
}

FlowDir column_direction(int64_t column, int64_t fusion_columns) {
    if (column < fusion_columns / 2) return FlowDir::Down;
    if (fusion_columns % 2 == 1 && column == fusion_columns / 2) return FlowDir::Plain;
    return FlowDir::Up;
}

template <typename T>
Tensor<T> downsample_transition(const Tensor<T>& x, const TransitionWeights<T>& w, Tape<T>* tape) {
    return w.conv(pixel_unshuffle(x, 2), tape);
}

template <typename T>
Tensor<T> upsample_transition(const Tensor<T>& x, const TransitionWeights<T>& w, Tape<T>* tape) {
    return pixel_shuffle(w.conv(x, tape), 2);
}

template <typename T>
Tensor<T> weighted_fusion(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& w1,
                          const Tensor<T>& w2) {
    if (a.shape() != b.shape())
        throw ShapeError("weighted_fusion: shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    return add(channel_scale(a, w1), channel_scale(b, w2));
}

template <typename T>
RdtbConfig GridFormerModel<T>::row_rdtb_config(int64_t row) const {
    RdtbConfig rc;
    rc.channels = row_width(row);
    rc.growth = cfg_.growth;
    rc.cetls_per_rdtl = cfg_.cetls_per_rdtl;
    rc.cetl.sample_stride = cfg_.sampler_strides[size_t(row)];
    rc.cetl.heads_per_half = cfg_.heads_per_half;
    rc.cetl.ffn_expansion = cfg_.ffn_expansion;
    rc.cetl.use_norm = cfg_.use_norm;
    rc.cetl.use_feature_sampling = cfg_.use_feature_sampling;
    rc.cetl.use_channel_split = cfg_.use_channel_split;
    rc.cetl.use_local_enhancement = cfg_.use_local_enhancement;
    rc.dense_connections = cfg_.dense_connections;
    rc.local_fusion = cfg_.local_fusion;
    rc.local_skip = cfg_.local_skip;
    return rc;
}

template <typename T>
GridFormerModel<T>::GridFormerModel(GridConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    validate_grid_config(cfg_);
    std::mt19937_64 rng(seed);
    const int64_t rows = cfg_.rows;
    for (int64_t i = 0; i < rows; ++i) {
        const int64_t w = row_width(i);
        embed_.push_back(make_conv2d(store_, "head.e" + std::to_string(i),
                                     ConvSpec{3, w, 3, 1, 1, true}, rng));
        head_gfl_.push_back(
            make_rdtb(store_, "head.gfl" + std::to_string(i), row_rdtb_config(i), rng));
    }
    for (int64_t i = 1; i < rows; ++i) {
        const int64_t prev = row_width(i - 1);
        TransitionWeights<T> tw;
        tw.conv = make_conv2d(store_, "head.down" + std::to_string(i) + ".conv",
                              ConvSpec{4 * prev, 2 * prev, 3, 1, 1, true}, rng);
        head_down_.push_back(tw);
    }
    for (int64_t j = 0; j < cfg_.fusion_columns; ++j) {
        const FlowDir dir = column_direction(j, cfg_.fusion_columns);
        std::vector<FusionCell> col;
        for (int64_t i = 0; i < rows; ++i) {
            const std::string cp =
                "fusion.col" + std::to_string(j) + ".row" + std::to_string(i);
            FusionCell cell;
            cell.gfl = make_rdtb(store_, cp + ".gfl", row_rdtb_config(i), rng);
            const int64_t w = row_width(i);
            const bool down_site = dir == FlowDir::Down && i > 0;
            const bool up_site = dir == FlowDir::Up && i < rows - 1;
            if (down_site || up_site) {
                cell.has_site = true;
                const ConvSpec ts = down_site ? ConvSpec{4 * row_width(i - 1), w, 3, 1, 1, true}
                                              : ConvSpec{row_width(i + 1), 4 * w, 3, 1, 1, true};
                cell.trans.conv = make_conv2d(store_, cp + ".trans.conv", ts, rng);
                cell.w1 = &store_.create(cp + ".w1", Tensor<T>::full(Shape{w}, T(0.5)));
                cell.w2 = &store_.create(cp + ".w2", Tensor<T>::full(Shape{w}, T(0.5)));
            }
            col.push_back(std::move(cell));
        }
        fusion_.push_back(std::move(col));
    }
    for (int64_t i = 0; i < rows; ++i) {
        tail_gfl_.push_back(
            make_rdtb(store_, "tail.gfl" + std::to_string(i), row_rdtb_config(i), rng));
        tail_conv_.push_back(make_conv2d(store_, "tail.c" + std::to_string(i),
                                         ConvSpec{row_width(i), 3, 3, 1, 1, true}, rng));
    }
}

template <typename T>
int64_t GridFormerModel<T>::pad_multiple() const {
    int64_t m = 16;
    m = std::lcm(m, int64_t(1) << (cfg_.rows - 1));
    for (int64_t i = 0; i < cfg_.rows; ++i)
        m = std::lcm(m, (int64_t(1) << i) * cfg_.sampler_strides[size_t(i)]);
    return m;
}

template <typename T>
void GridFormerModel<T>::check_pyramid(const std::vector<Tensor<T>>& x) const {
    if (int64_t(x.size()) != cfg_.rows)
        throw ContractError("pyramid has " + std::to_string(x.size()) + " levels, config rows " +
                            std::to_string(cfg_.rows));
    const Shape& s0 = x[0].shape();
    if (s0.rank() != 4 || s0[1] != 3)
        throw ContractError("pyramid level 0 must be [N,3,H,W], got " + s0.str());
    const int64_t m = pad_multiple();
    if (s0[2] % m != 0 || s0[3] % m != 0)
        throw ContractError("pyramid level 0 extents " + s0.str() + " not divisible by " +
                            std::to_string(m));
    for (size_t i = 1; i < x.size(); ++i) {
        const Shape& s = x[i].shape();
        if (s.rank() != 4 || s[0] != s0[0] || s[1] != 3 || s[2] * 2 != x[i - 1].shape()[2] ||
            s[3] * 2 != x[i - 1].shape()[3])
            throw ContractError("pyramid level " + std::to_string(i) + " shape " + s.str() +
                                " inconsistent with level 0 " + s0.str());
    }
}

template <typename T>
std::vector<Tensor<T>> GridFormerModel<T>::grid_head(const std::vector<Tensor<T>>& x,
                                                     Tape<T>* tape) const {
    check_pyramid(x);
    std::vector<Tensor<T>> f;
    for (int64_t i = 0; i < cfg_.rows; ++i) {
        Tensor<T> e = rdtb_forward(embed_[size_t(i)](x[size_t(i)], tape), head_gfl_[size_t(i)], tape);
        if (i > 0) e = add(e, downsample_transition(f.back(), head_down_[size_t(i - 1)], tape));
        f.push_back(e);
    }
    return f;
}

template <typename T>
std::vector<Tensor<T>> GridFormerModel<T>::grid_fusion(const std::vector<Tensor<T>>& f,
                                                       Tape<T>* tape) const {
    if (int64_t(f.size()) != cfg_.rows)
        throw ContractError("grid_fusion: expected " + std::to_string(cfg_.rows) + " rows");
    std::vector<Tensor<T>> cur = f;
    const int64_t rows = cfg_.rows;
    for (int64_t j = 0; j < cfg_.fusion_columns; ++j) {
        const FlowDir dir = column_direction(j, cfg_.fusion_columns);
        const std::vector<FusionCell>& col = fusion_[size_t(j)];
        std::vector<Tensor<T>> out(static_cast<size_t>(rows));
        if (dir == FlowDir::Up) {
            for (int64_t i = rows - 1; i >= 0; --i) {
                const FusionCell& cell = col[size_t(i)];
                Tensor<T> g = rdtb_forward(cur[size_t(i)], cell.gfl, tape);
                if (cell.has_site) {
                    Tensor<T> t = upsample_transition(out[size_t(i + 1)], cell.trans, tape);
                    g = weighted_fusion(g, t, bind(*cell.w1, tape), bind(*cell.w2, tape));
                }
                out[size_t(i)] = g;
            }
        } else {
            for (int64_t i = 0; i < rows; ++i) {
                const FusionCell& cell = col[size_t(i)];
                Tensor<T> g = rdtb_forward(cur[size_t(i)], cell.gfl, tape);
                if (cell.has_site) {
                    Tensor<T> t = downsample_transition(out[size_t(i - 1)], cell.trans, tape);
                    g = weighted_fusion(g, t, bind(*cell.w1, tape), bind(*cell.w2, tape));
                }
                out[size_t(i)] = g;
            }
        }
        cur = std::move(out);
    }
    return cur;
}

template <typename T>
std::vector<Tensor<T>> GridFormerModel<T>::grid_tail(const std::vector<Tensor<T>>& fhat,
                                                     const std::vector<Tensor<T>>& x,
                                                     Tape<T>* tape) const {
    if (fhat.size() != x.size() || int64_t(x.size()) != cfg_.rows)
        throw ContractError("grid_tail: feature/image pyramid size mismatch");
    std::vector<Tensor<T>> out;
    for (int64_t i = 0; i < cfg_.rows; ++i) {
        Tensor<T> g = rdtb_forward(fhat[size_t(i)], tail_gfl_[size_t(i)], tape);
        out.push_back(add(tail_conv_[size_t(i)](g, tape), x[size_t(i)]));
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> GridFormerModel<T>::forward(const std::vector<Tensor<T>>& pyramid,
                                                   Tape<T>* tape) const {
    return grid_tail(grid_fusion(grid_head(pyramid, tape), tape), pyramid, tape);
}

template <typename T>
std::vector<Tensor<T>> GridFormerModel<T>::restore_pyramid(const Tensor<T>& image,
                                                           Tape<T>* tape) const {
    const Shape& s = image.shape();
    if (s.rank() != 4 || s[1] != 3)
        throw ContractError("restore: expected [N,3,H,W], got " + s.str());
    const int64_t m = pad_multiple();
    const int64_t h = s[2], w = s[3];
    const int64_t ph = (m - h % m) % m;
    const int64_t pw = (m - w % m) % m;
    Tensor<T> x0 = (ph || pw) ? pad_reflect(image, ph, pw) : image;
    std::vector<Tensor<T>> pyr{x0};
    for (int64_t i = 1; i < cfg_.rows; ++i) pyr.push_back(avg_pool2d(pyr.back(), 2));
    std::vector<Tensor<T>> out = forward(pyr, tape);
    int64_t th = h, tw = w;
    for (int64_t i = 0; i < cfg_.rows; ++i) {
        const Shape& os = out[size_t(i)].shape();
        if (os[2] != th || os[3] != tw) out[size_t(i)] = crop_spatial(out[size_t(i)], 0, 0, th, tw);
        th = (th + 1) / 2;
        tw = (tw + 1) / 2;
    }
    return out;
}

template <typename T>
Tensor<T> GridFormerModel<T>::restore(const Tensor<T>& image, Tape<T>* tape) const {
    return restore_pyramid(image, tape)[0];
}

namespace {

constexpr char kCkptMagic[4] = {'G', 'F', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;

template <typename V>
void put(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is, const std::string& what) {
    V v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!is) throw FormatError("checkpoint: truncated while reading " + what);
    return v;
}

std::string get_string(std::istream& is, const std::string& what) {
    const uint64_t n = get<uint64_t>(is, what + " length");
    std::string s(n, '\0');
    is.read(s.data(), std::streamsize(n));
    if (!is) throw FormatError("checkpoint: truncated while reading " + what);
    return s;
}

void put_string(std::ostream& os, const std::string& s) {
    put<uint64_t>(os, s.size());
    os.write(s.data(), std::streamsize(s.size()));
}

std::string read_ckpt_config_text(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw FormatError(path + ": not a GFCK checkpoint");
    const uint32_t version = get<uint32_t>(is, "version");
    if (version != kCkptVersion)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    return get_string(is, "config block");
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const GridFormerModel<T>& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kCkptMagic, 4);
    put<uint32_t>(os, kCkptVersion);
    put_string(os, grid_config_kv(model.config()).text());
    const auto params = model.params().list();
    put<uint64_t>(os, params.size());
    for (const Parameter<T>* p : params) {
        put_string(os, p->path);
        write_tensor(os, p->value);
    }
    if (!os) throw IoError("write failed: " + path);
}

template <typename T>
void load_checkpoint(const std::string& path, GridFormerModel<T>& model) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    read_ckpt_config_text(is, path);
    const uint64_t count = get<uint64_t>(is, "parameter count");
    std::unordered_map<std::string, bool> seen;
    for (uint64_t i = 0; i < count; ++i) {
        const std::string ppath = get_string(is, "parameter path");
        Tensor<T> t = read_tensor<T>(is, path + ": '" + ppath + "'");
        Parameter<T>* p = model.params().find(ppath);
        if (!p) throw FormatError(path + ": parameter path not in model: " + ppath);
        if (t.shape() != p->value.shape())
            throw FormatError(path + ": shape mismatch at " + ppath + ": file " +
                              t.shape().str() + ", model " + p->value.shape().str());
        p->value = t;
        seen[ppath] = true;
    }
    for (Parameter<T>* p : model.params().list())
        if (!seen.count(p->path))
            throw FormatError(path + ": parameter path missing from file: " + p->path);
}

GridConfig checkpoint_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return grid_config_from_kv(parse_kv_text(read_ckpt_config_text(is, path)));
}

#define GF_INSTANTIATE_GRID(T)                                                                \
    template Tensor<T> downsample_transition<T>(const Tensor<T>&, const TransitionWeights<T>&, \
                                                Tape<T>*);                                    \
    template Tensor<T> upsample_transition<T>(const Tensor<T>&, const TransitionWeights<T>&,  \
                                              Tape<T>*);                                      \
    template Tensor<T> weighted_fusion<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          const Tensor<T>&);                                  \
    template class GridFormerModel<T>;                                                        \
    template void save_checkpoint<T>(const std::string&, const GridFormerModel<T>&);          \
    template void load_checkpoint<T>(const std::string&, GridFormerModel<T>&);

GF_INSTANTIATE_GRID(float)
GF_INSTANTIATE_GRID(double)

}  // namespace gridformer
