#include "gridformer/profile.hpp"

#include <ostream>

#include "gridformer/errors.hpp"

namespace gridformer {

int64_t conv2d_macs(int64_t cout, int64_t cin, int64_t k, int64_t out_h, int64_t out_w) {
    return cout * cin * k * k * out_h * out_w;
}

int64_t matmul_macs(int64_t m, int64_t k, int64_t n) { return m * k * n; }

int64_t bmm_macs(int64_t b, int64_t m, int64_t k, int64_t n) { return b * m * k * n; }

namespace {

struct Ctx {
    ProfileReport* report;
};

ProfileNode conv_node(const std::string& path, int64_t cout, int64_t cin, int64_t k, bool bias,
                      int64_t out_h, int64_t out_w) {
    ProfileNode n;
    n.path = path;
    n.params = cout * cin * k * k + (bias ? cout : 0);
    n.macs = conv2d_macs(cout, cin, k, out_h, out_w);
    return n;
}

ProfileNode leaf_params(const std::string& path, int64_t params) {
    ProfileNode n;
    n.path = path;
    n.params = params;
    return n;
}

void roll_up(ProfileNode& n) {
    for (ProfileNode& c : n.children) {
        n.params += c.params;
        n.macs += c.macs;
    }
}

ProfileNode cetl_profile(Ctx& ctx, const std::string& path, const CetlConfig& cc, int64_t h,
                         int64_t w) {
    ProfileNode n;
    n.path = path;
    const int64_t c = cc.channels;
    const bool fs = cc.use_feature_sampling && cc.sample_stride > 1;
    const int64_t hs = fs ? h / cc.sample_stride : h;
    const int64_t ws = fs ? w / cc.sample_stride : w;
    if (cc.use_norm) n.children.push_back(leaf_params(path + ".norm1", 2 * c));
    const int64_t cb = cc.use_channel_split ? c / 2 : c;
    const int64_t nproj = cc.use_channel_split ? 6 : 3;
    ProfileNode attn;
    attn.path = path + ".attn";
    static const char* kProjNames[6] = {".q1", ".k1", ".v1", ".q2", ".k2", ".v2"};
    for (int64_t i = 0; i < nproj; ++i)
        attn.children.push_back(conv_node(path + kProjNames[i], cb, cb, 1, true, hs, ws));
    const int64_t proj_params = nproj * (cb * cb + cb);
    const int64_t attn_macs =
        compact_attention_macs(c, hs * ws, cc.use_channel_split, cc.heads_per_half);
    ProfileNode bmms;
    bmms.path = path + ".attn.matmuls";
    bmms.macs = attn_macs;
    attn.children.push_back(bmms);
    roll_up(attn);
    ctx.report->attention_macs += attn_macs;
    ctx.report->attention_params += proj_params;
    n.children.push_back(std::move(attn));
    if (cc.use_local_enhancement) {
        ProfileNode le;
        le.path = path + ".le";
        const int64_t r = fs ? cc.sample_stride : 1;
        // Deconv MACs count kernel taps per input position.
        le.children.push_back(conv_node(path + ".le.deconv", c, c, r, true, hs, ws));
        le.children.push_back(conv_node(path + ".le.conv", c, c, 1, true, h, w));
        roll_up(le);
        n.children.push_back(std::move(le));
    }
    ProfileNode ffn;
    ffn.path = path + ".ffn";
    ffn.children.push_back(conv_node(path + ".ffn1", c * cc.ffn_expansion, c, 1, true, h, w));
    ffn.children.push_back(conv_node(path + ".ffn2", c, c * cc.ffn_expansion, 1, true, h, w));
    roll_up(ffn);
    n.children.push_back(std::move(ffn));
    if (cc.use_norm) n.children.push_back(leaf_params(path + ".norm2", 2 * c));
    roll_up(n);
    return n;
}

ProfileNode rdtb_profile(Ctx& ctx, const std::string& path, const RdtbConfig& rc, int64_t h,
                         int64_t w) {
    ProfileNode n;
    n.path = path;
    const int64_t c = rc.channels, g = rc.growth;
    CetlConfig cc = rc.cetl;
    cc.channels = c;
    for (int64_t k = 0; k < rc.num_rdtl; ++k) {
        ProfileNode layer;
        const std::string lp = path + ".rdtl" + std::to_string(k);
        layer.path = lp;
        const int64_t in_ch = rc.dense_connections ? c + k * g : c;
        layer.children.push_back(conv_node(lp + ".entry", c, in_ch, 1, true, h, w));
        for (int64_t j = 0; j < rc.cetls_per_rdtl; ++j)
            layer.children.push_back(
                cetl_profile(ctx, lp + ".cetl" + std::to_string(j), cc, h, w));
        if (rc.dense_connections)
            layer.children.push_back(conv_node(lp + ".tail", g, c, 1, true, h, w));
        roll_up(layer);
        n.children.push_back(std::move(layer));
    }
    const int64_t fuse_in = rc.dense_connections ? c + rc.num_rdtl * g : c;
    const int64_t last_out = rc.dense_connections ? g : c;
    const int64_t fi = rc.local_fusion ? fuse_in : last_out;
    n.children.push_back(conv_node(path + ".lf", c, fi, 1, false, h, w));
    roll_up(n);
    return n;
}

RdtbConfig profile_rdtb_config(const GridConfig& cfg, int64_t row) {
    RdtbConfig rc;
    rc.channels = (int64_t(1) << row) * cfg.base_channels;
    rc.growth = cfg.growth;
    rc.cetls_per_rdtl = cfg.cetls_per_rdtl;
    rc.cetl.sample_stride = cfg.sampler_strides[size_t(row)];
    rc.cetl.heads_per_half = cfg.heads_per_half;
    rc.cetl.ffn_expansion = cfg.ffn_expansion;
    rc.cetl.use_norm = cfg.use_norm;
    rc.cetl.use_feature_sampling = cfg.use_feature_sampling;
    rc.cetl.use_channel_split = cfg.use_channel_split;
    rc.cetl.use_local_enhancement = cfg.use_local_enhancement;
    rc.dense_connections = cfg.dense_connections;
    rc.local_fusion = cfg.local_fusion;
    rc.local_skip = cfg.local_skip;
    return rc;
}

}  // namespace

ProfileReport profile_model(const GridConfig& cfg, int64_t h, int64_t w) {
    validate_grid_config(cfg);
    ProfileReport report;
    Ctx ctx{&report};
    ProfileNode root;
    root.path = "model";
    const int64_t rows = cfg.rows;
    auto width = [&cfg](int64_t i) { return (int64_t(1) << i) * cfg.base_channels; };
    auto he = [h](int64_t i) { return h >> i; };
    auto we = [w](int64_t i) { return w >> i; };
    for (int64_t i = 0; i < rows; ++i) {
        if (he(i) < 1 || we(i) < 1 || (he(i) % cfg.sampler_strides[size_t(i)]) ||
            (we(i) % cfg.sampler_strides[size_t(i)]))
            throw ConfigError("profile: extents do not satisfy row " + std::to_string(i) +
                              " divisibility");
    }
    ProfileNode head;
    head.path = "head";
    for (int64_t i = 0; i < rows; ++i) {
        head.children.push_back(
            conv_node("head.e" + std::to_string(i), width(i), 3, 3, true, he(i), we(i)));
        head.children.push_back(
            rdtb_profile(ctx, "head.gfl" + std::to_string(i), profile_rdtb_config(cfg, i), he(i), we(i)));
    }
    for (int64_t i = 1; i < rows; ++i)
        head.children.push_back(conv_node("head.down" + std::to_string(i) + ".conv",
                                          2 * width(i - 1), 4 * width(i - 1), 3, true, he(i),
                                          we(i)));
    roll_up(head);
    root.children.push_back(std::move(head));
    ProfileNode fusion;
    fusion.path = "fusion";
    for (int64_t j = 0; j < cfg.fusion_columns; ++j) {
        ProfileNode col;
        col.path = "fusion.col" + std::to_string(j);
        const FlowDir dir = column_direction(j, cfg.fusion_columns);
        for (int64_t i = 0; i < rows; ++i) {
            const std::string cp = col.path + ".row" + std::to_string(i);
            ProfileNode cell;
            cell.path = cp;
            cell.children.push_back(
                rdtb_profile(ctx, cp + ".gfl", profile_rdtb_config(cfg, i), he(i), we(i)));
            const bool down_site = dir == FlowDir::Down && i > 0;
            const bool up_site = dir == FlowDir::Up && i < rows - 1;
            if (down_site)
                cell.children.push_back(conv_node(cp + ".trans.conv", width(i), 4 * width(i - 1),
                                                  3, true, he(i), we(i)));
            if (up_site)
                cell.children.push_back(conv_node(cp + ".trans.conv", 4 * width(i), width(i + 1),
                                                  3, true, he(i + 1), we(i + 1)));
            if (down_site || up_site)
                cell.children.push_back(leaf_params(cp + ".w", 2 * width(i)));
            roll_up(cell);
            col.children.push_back(std::move(cell));
        }
        roll_up(col);
        fusion.children.push_back(std::move(col));
    }
    roll_up(fusion);
    root.children.push_back(std::move(fusion));
    ProfileNode tail;
    tail.path = "tail";
    for (int64_t i = 0; i < rows; ++i) {
        tail.children.push_back(
            rdtb_profile(ctx, "tail.gfl" + std::to_string(i), profile_rdtb_config(cfg, i), he(i), we(i)));
        tail.children.push_back(
            conv_node("tail.c" + std::to_string(i), 3, width(i), 3, true, he(i), we(i)));
    }
    roll_up(tail);
    root.children.push_back(std::move(tail));
    roll_up(root);
    report.root = std::move(root);
    return report;
}

namespace {

void write_node(std::ostream& os, const ProfileNode& n, int64_t depth, int64_t max_depth) {
    for (int64_t i = 0; i < depth; ++i) os << "  ";
    os << n.path << "  params=" << n.params << "  macs=" << n.macs << "\n";
    if (depth >= max_depth) return;
    for (const ProfileNode& c : n.children) write_node(os, c, depth + 1, max_depth);
}

}  // namespace

void write_profile_report(std::ostream& os, const ProfileReport& report, int64_t max_depth) {
    write_node(os, report.root, 0, max_depth);
    os << "attention: macs=" << report.attention_macs << "  params=" << report.attention_params
       << "\n";
}

template <typename T>
int64_t tape_macs(const Tape<T>& tape) {
    int64_t total = 0;
    for (size_t id = 0; id < tape.num_nodes(); ++id) {
        const auto& node = tape.node(id);
        switch (node.kind) {
            case OpKind::Conv2d: {
                const Shape& ws = tape.node(node.parents[1]).value.shape();
                const Shape& os = node.value.shape();
                total += os[0] * conv2d_macs(os[1], ws[1], ws[2], os[2], os[3]);
                break;
            }
            case OpKind::ConvT2d: {
                const Shape& ws = tape.node(node.parents[1]).value.shape();
                const Shape& xs = tape.node(node.parents[0]).value.shape();
                total += xs[0] * conv2d_macs(ws[1], ws[0], ws[2], xs[2], xs[3]);
                break;
            }
            case OpKind::Matmul: {
                const Shape& as = tape.node(node.parents[0]).value.shape();
                const Shape& os = node.value.shape();
                total += matmul_macs(os[0], as[1], os[1]);
                break;
            }
            case OpKind::Bmm: {
                const Shape& as = tape.node(node.parents[0]).value.shape();
                const Shape& os = node.value.shape();
                total += bmm_macs(os[0], os[1], as[2], os[2]);
                break;
            }
            default: break;
        }
    }
    return total;
}

std::vector<AblateRow> ablate_table(const GridConfig& base, int64_t extent) {
    std::vector<std::pair<std::string, GridConfig>> variants;
    variants.emplace_back("full", base);
    GridConfig v = base;
    v.use_channel_split = false;
    variants.emplace_back("no-channel-split", v);
    v = base;
    v.use_local_enhancement = false;
    variants.emplace_back("no-local-enhancement", v);
    v = base;
    v.use_feature_sampling = false;
    variants.emplace_back("no-feature-sampling", v);
    v = base;
    v.dense_connections = false;
    variants.emplace_back("no-dense-connections", v);
    v = base;
    v.local_fusion = false;
    variants.emplace_back("no-local-fusion", v);
    v = base;
    v.local_skip = false;
    variants.emplace_back("no-local-skip", v);
    std::vector<AblateRow> rows;
    for (const auto& [name, cfg] : variants) {
        const ProfileReport r = profile_model(cfg, extent, extent);
        rows.push_back(
            {name, r.root.params, r.root.macs, r.attention_macs, r.attention_params});
    }
    return rows;
}

void write_ablate_csv(std::ostream& os, const std::vector<AblateRow>& rows) {
    os << "config,params,macs,attention_macs,attention_params\n";
    for (const AblateRow& r : rows)
        os << r.name << "," << r.params << "," << r.macs << "," << r.attention_macs << ","
           << r.attention_params << "\n";
}

template int64_t tape_macs<float>(const Tape<float>&);
template int64_t tape_macs<double>(const Tape<double>&);

}  // namespace gridformer
