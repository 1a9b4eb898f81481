#include "ssa/fusion_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "binary_io.hpp"
#include "ssa/graph_ops.hpp"

namespace ssa {

void ModelConfig::validate() const {
    if (d_feat < 1) throw ConfigError("model.d_feat must be >= 1");
    if (c_max < 2) throw ConfigError("model.c_max must be >= 2");
    if (enc_spe_depth < 0 || enc_spa_depth < 0) throw ConfigError("encoder depths must be >= 0");
    if (decoder_hidden < 1) throw ConfigError("model.decoder_hidden must be >= 1");
    if (decoder_layers < 0) throw ConfigError("model.decoder_layers must be >= 0");
}

namespace {

constexpr int kConvK = 3;

template <typename T>
ConvParams<T> make_conv(const std::string& name, int out, int in) {
    return {Parameter<T>(name + ".weight", BasicTensor4<T>(out, in, kConvK, kConvK)),
            Parameter<T>(name + ".bias", BasicTensor4<T>(1, out, 1, 1))};
}

template <typename T>
LinearParams<T> make_linear(const std::string& name, int out, int in) {
    return {Parameter<T>(name + ".weight", BasicTensor4<T>(out, in, 1, 1)),
            Parameter<T>(name + ".bias", BasicTensor4<T>(1, out, 1, 1))};
}

template <typename T>
ResidualEncoder<T> make_encoder(const std::string& name, int d, int depth) {
    ResidualEncoder<T> enc;
    enc.head = make_conv<T>(name + ".head", d, d);
    for (int b = 0; b < depth; ++b) {
        const std::string p = name + ".block" + std::to_string(b);
        enc.blocks.push_back({make_conv<T>(p + ".conv0", d, d), make_conv<T>(p + ".conv1", d, d)});
    }
    enc.tail = make_conv<T>(name + ".tail", d, d);
    return enc;
}

template <typename P>
void collect_encoder(P& enc, auto& out) {
    out.push_back(&enc.head.weight);
    out.push_back(&enc.head.bias);
    for (auto& blk : enc.blocks) {
        for (auto& conv : blk) {
            out.push_back(&conv.weight);
            out.push_back(&conv.bias);
        }
    }
    out.push_back(&enc.tail.weight);
    out.push_back(&enc.tail.bias);
}

template <typename M>
void collect_all(M& m, auto& out) {
    out.push_back(&m.mk_in.weight);
    out.push_back(&m.mk_in.bias);
    collect_encoder(m.enc_spe, out);
    collect_encoder(m.enc_spa, out);
    for (auto& lin : m.decoder) {
        out.push_back(&lin.weight);
        out.push_back(&lin.bias);
    }
    out.push_back(&m.weight_head.weight);
    out.push_back(&m.weight_head.bias);
    out.push_back(&m.mk_out.weight);
    out.push_back(&m.mk_out.bias);
}

// Fan-in of a weight tensor (out, in, k, k): in * k * k.
std::size_t fan_in(const Shape4& weight_dims) {
    return static_cast<std::size_t>(weight_dims.c) * weight_dims.h * weight_dims.w;
}

}  // namespace

template <typename T>
FusionModel<T>::FusionModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int d = cfg.d_feat;
    mk_in = MKInputLayer<T>("mk_in", d, cfg.c_max, kConvK, 1, 1);
    enc_spe = make_encoder<T>("enc_spe", d, cfg.enc_spe_depth);
    enc_spa = make_encoder<T>("enc_spa", d, cfg.enc_spa_depth);
    int in = 2 * d + 2;
    for (int l = 0; l < cfg.decoder_layers; ++l) {
        decoder.push_back(make_linear<T>("decoder.fc" + std::to_string(l), cfg.decoder_hidden, in));
        in = cfg.decoder_hidden;
    }
    decoder.push_back(make_linear<T>("decoder.fc" + std::to_string(cfg.decoder_layers), d, in));
    weight_head = make_linear<T>("weight_head", 1, d);
    mk_out = MKOutputLayer<T>("mk_out", d, cfg.c_max, kConvK, 1, 1);
}

template <typename T>
void FusionModel<T>::init(Rng& rng) {
    // Biases share the bound of the weight that precedes them.
    double bound = 1.0;
    for (Parameter<T>* p : parameters()) {
        const bool is_weight = p->name.size() >= 7 && p->name.compare(p->name.size() - 7, 7, ".weight") == 0;
        if (is_weight) {
            std::size_t fi = fan_in(p->value.dims());
            if (p == &mk_in.weight) fi = static_cast<std::size_t>(cfg_.c_max) * kConvK * kConvK;
            bound = 1.0 / std::sqrt(static_cast<double>(fi));
        }
        for (T& v : p->value.values()) v = static_cast<T>(uniform(rng, -bound, bound));
    }
}

template <typename T>
std::vector<Parameter<T>*> FusionModel<T>::parameters() {
    std::vector<Parameter<T>*> out;
    collect_all(*this, out);
    return out;
}

template <typename T>
std::vector<const Parameter<T>*> FusionModel<T>::parameters() const {
    std::vector<const Parameter<T>*> out;
    collect_all(*this, out);
    return out;
}

template <typename T>
Parameter<T>* FusionModel<T>::find(const std::string& name) {
    for (Parameter<T>* p : parameters()) {
        if (p->name == name) return p;
    }
    return nullptr;
}

template <typename T>
void FusionModel<T>::zero_grad() {
    for (Parameter<T>* p : parameters()) p->zero_grad();
}

template <typename T>
template <typename U>
FusionModel<U> FusionModel<T>::cast() const {
    FusionModel<U> out(cfg_);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i]->value = src[i]->value.template cast<U>();
        dst[i]->zero_grad();
    }
    return out;
}

std::array<double, 2> normalize_coords(int i, int j, int height, int width) {
    if (height < 1 || width < 1 || i < 0 || i >= height || j < 0 || j >= width) {
        throw ArgumentError("normalize_coords: pixel (" + std::to_string(i) + "," + std::to_string(j) +
                            ") outside " + std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
    const double y = height == 1 ? 0.0 : 2.0 * i / (height - 1) - 1.0;
    const double x = width == 1 ? 0.0 : 2.0 * j / (width - 1) - 1.0;
    return {y, x};
}

QueryPoint nearest_lr_neighbors(std::array<double, 2> p, int lr_h, int lr_w) {
    QueryPoint qp;
    qp.p = p;
    const int extent[2] = {lr_h, lr_w};
    int lo[2];
    int hi[2];
    for (int a = 0; a < 2; ++a) {
        double u = extent[a] == 1 ? 0.0 : (p[a] + 1.0) * 0.5 * (extent[a] - 1);
        u = std::clamp(u, 0.0, static_cast<double>(extent[a] - 1));
        lo[a] = std::clamp(static_cast<int>(std::floor(u)), 0, extent[a] - 1);
        hi[a] = std::clamp(static_cast<int>(std::ceil(u)), 0, extent[a] - 1);
    }
    const int rows[4] = {lo[0], lo[0], hi[0], hi[0]};
    const int cols[4] = {lo[1], hi[1], lo[1], hi[1]};
    for (int k = 0; k < 4; ++k) {
        qp.neighbors[k] = {rows[k], cols[k]};
        const auto q = normalize_coords(rows[k], cols[k], lr_h, lr_w);
        qp.offsets[k] = {p[0] - q[0], p[1] - q[1]};
    }
    return qp;
}

std::vector<DecodeQuery> make_queries(int hr_h, int hr_w, int lr_h, int lr_w) {
    std::vector<DecodeQuery> qs;
    qs.reserve(static_cast<std::size_t>(hr_h) * hr_w);
    for (int i = 0; i < hr_h; ++i) {
        for (int j = 0; j < hr_w; ++j) {
            qs.push_back({nearest_lr_neighbors(normalize_coords(i, j, hr_h, hr_w), lr_h, lr_w), i, j});
        }
    }
    return qs;
}

namespace {

// Rows (Q*4, 2d+2): [E_pe at q_k | E_pa at the HR pixel | p - q_k], query-major.
template <typename T>
Var gather_decoder_inputs(Tape<T>& tape, Var e_pe, Var e_pa, std::span<const DecodeQuery> queries) {
    const auto& pe = tape.value(e_pe);
    const auto& pa = tape.value(e_pa);
    if (pe.n() != 1 || pa.n() != 1 || pe.c() != pa.c()) {
        throw ShapeError("decoder latents disagree: spectral " + to_string(pe.dims()) + " vs spatial " +
                         to_string(pa.dims()));
    }
    const int d = pe.c();
    const int width = 2 * d + 2;
    const std::size_t q_count = queries.size();
    for (const auto& dq : queries) {
        if (dq.hr_i < 0 || dq.hr_i >= pa.h() || dq.hr_j < 0 || dq.hr_j >= pa.w()) {
            throw ShapeError("query pixel outside spatial latent " + to_string(pa.dims()));
        }
        for (const auto& nb : dq.query.neighbors) {
            if (nb[0] < 0 || nb[0] >= pe.h() || nb[1] < 0 || nb[1] >= pe.w()) {
                throw ShapeError("query neighbor outside spectral latent " + to_string(pe.dims()));
            }
        }
    }
    BasicTensor4<T> rows(static_cast<int>(q_count * 4), width, 1, 1);
    const std::size_t pe_plane = pe.dims().plane();
    const std::size_t pa_plane = pa.dims().plane();
    for (std::size_t q = 0; q < q_count; ++q) {
        const DecodeQuery& dq = queries[q];
        const std::size_t pa_off = static_cast<std::size_t>(dq.hr_i) * pa.w() + dq.hr_j;
        for (int k = 0; k < 4; ++k) {
            T* row = rows.data() + (q * 4 + k) * width;
            const std::size_t pe_off = static_cast<std::size_t>(dq.query.neighbors[k][0]) * pe.w() + dq.query.neighbors[k][1];
            for (int c = 0; c < d; ++c) row[c] = pe[c * pe_plane + pe_off];
            for (int c = 0; c < d; ++c) row[d + c] = pa[c * pa_plane + pa_off];
            row[2 * d] = static_cast<T>(dq.query.offsets[k][0]);
            row[2 * d + 1] = static_cast<T>(dq.query.offsets[k][1]);
        }
    }
    std::vector<DecodeQuery> saved(queries.begin(), queries.end());
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(rows), {e_pe, e_pa}, [=, saved = std::move(saved)](Tape<T>& t) {
        const auto& g = t.grad(self);
        const int pe_w = t.value(e_pe).w();
        const int pa_w = t.value(e_pa).w();
        T* gpe = t.requires_grad(e_pe) ? t.grad_buffer(e_pe).data() : nullptr;
        T* gpa = t.requires_grad(e_pa) ? t.grad_buffer(e_pa).data() : nullptr;
        for (std::size_t q = 0; q < saved.size(); ++q) {
            const DecodeQuery& dq = saved[q];
            const std::size_t pa_off = static_cast<std::size_t>(dq.hr_i) * pa_w + dq.hr_j;
            for (int k = 0; k < 4; ++k) {
                const T* row = g.data() + (q * 4 + k) * width;
                const std::size_t pe_off =
                    static_cast<std::size_t>(dq.query.neighbors[k][0]) * pe_w + dq.query.neighbors[k][1];
                if (gpe != nullptr) {
                    for (int c = 0; c < d; ++c) gpe[c * pe_plane + pe_off] += row[c];
                }
                if (gpa != nullptr) {
                    for (int c = 0; c < d; ++c) gpa[c * pa_plane + pa_off] += row[d + c];
                }
            }
        }
    });
}

template <typename T>
Var conv3(Tape<T>& tape, ConvParams<T>& conv, Var x) {
    return ops::conv2d(tape, x, tape.parameter(conv.weight), tape.parameter(conv.bias), 1, 1);
}

template <typename T>
Var apply_linear(Tape<T>& tape, LinearParams<T>& lin, Var x) {
    return ops::linear(tape, x, tape.parameter(lin.weight), tape.parameter(lin.bias));
}

}  // namespace

template <typename T>
Var encode(Tape<T>& tape, ResidualEncoder<T>& enc, Var x) {
    Var head = conv3(tape, enc.head, x);
    Var body = head;
    for (auto& blk : enc.blocks) {
        Var t = ops::relu(tape, conv3(tape, blk[0], body));
        t = conv3(tape, blk[1], t);
        body = ops::add(tape, body, t);
    }
    return ops::add(tape, conv3(tape, enc.tail, body), head);
}

template <typename T>
DecodeOutput<T> decode_queries(Tape<T>& tape, FusionModel<T>& model, Var e_pe, Var e_pa,
                               std::span<const DecodeQuery> queries) {
    const int d = model.config().d_feat;
    if (tape.value(e_pe).c() != d || tape.value(e_pa).c() != d) {
        throw ShapeError("decoder expects " + std::to_string(d) + "-channel latents, got " +
                         to_string(tape.value(e_pe).dims()) + " and " + to_string(tape.value(e_pa).dims()));
    }
    Var h = gather_decoder_inputs(tape, e_pe, e_pa, queries);
    for (std::size_t l = 0; l < model.decoder.size(); ++l) {
        h = apply_linear(tape, model.decoder[l], h);
        if (l + 1 < model.decoder.size()) h = ops::relu(tape, h);
    }
    Var logits = apply_linear(tape, model.weight_head, h);
    logits = ops::reshape(tape, logits, Shape4{static_cast<int>(queries.size()), 4, 1, 1});
    Var weights = ops::softmax_rows(tape, logits);
    Var features = ops::group_weighted_sum(tape, h, weights);
    return {features, weights};
}

template <typename T>
std::vector<T> decode_residual(const FusionModel<T>& model, const BasicTensor4<T>& e_pe,
                               const BasicTensor4<T>& e_pa, const QueryPoint& query, std::array<int, 2> hr_pixel) {
    Tape<T> tape(false);
    // Grad-disabled tape never writes through the parameter handles.
    auto& m = const_cast<FusionModel<T>&>(model);
    const DecodeQuery dq{query, hr_pixel[0], hr_pixel[1]};
    auto out = decode_queries(tape, m, tape.constant(e_pe), tape.constant(e_pa), std::span<const DecodeQuery>(&dq, 1));
    const auto& f = tape.value(out.features);
    return {f.values().begin(), f.values().end()};
}

template <typename T>
FuseTrace<T> fuse(Tape<T>& tape, FusionModel<T>& model, Var y_lr, Var z_hr) {
    const auto& yv = tape.value(y_lr);
    const auto& zv = tape.value(z_hr);
    const int c_max = model.config().c_max;
    if (yv.n() != 1 || zv.n() != 1) {
        throw ShapeError("fuse expects single samples, got " + to_string(yv.dims()) + " and " + to_string(zv.dims()));
    }
    const int bands = yv.c();
    if (bands < 1 || bands > c_max) {
        throw BandOverflowError("input has " + std::to_string(bands) + " bands; model supports at most c_max=" +
                                std::to_string(c_max));
    }
    if (bands + zv.c() > c_max) {
        throw BandOverflowError("concatenated HR input has " + std::to_string(bands + zv.c()) +
                                " bands; model supports at most c_max=" + std::to_string(c_max));
    }
    const int H = zv.h();
    const int W = zv.w();
    const int h = yv.h();
    const int w = yv.w();
    if (H < h || W < w) {
        throw UnsupportedScaleError("target " + std::to_string(H) + "x" + std::to_string(W) +
                                    " is smaller than the LR input " + std::to_string(h) + "x" + std::to_string(w));
    }

    FuseTrace<T> tr;
    tr.base = ops::bicubic_resize(tape, y_lr, H, W);
    tr.e_pe = encode(tape, model.enc_spe, mk_input_forward(tape, model.mk_in, y_lr));
    Var hr_in = ops::concat_channels(tape, tr.base, z_hr);
    tr.e_pa = encode(tape, model.enc_spa, mk_input_forward(tape, model.mk_in, hr_in));
    const auto queries = make_queries(H, W, h, w);
    auto dec = decode_queries(tape, model, tr.e_pe, tr.e_pa, queries);
    tr.ensemble_weights = dec.weights;
    Var feat_map = ops::rows_to_map(tape, dec.features, H, W);
    tr.residual = mk_output_forward(tape, model.mk_out, feat_map, bands);
    tr.output = ops::add(tape, tr.base, tr.residual);
    return tr;
}

template <typename T>
BasicTensor4<T> fuse(const FusionModel<T>& model, const BasicTensor4<T>& y_lr, const BasicTensor4<T>& z_hr) {
    Tape<T> tape(false);
    auto& m = const_cast<FusionModel<T>&>(model);
    auto tr = fuse(tape, m, tape.constant(y_lr), tape.constant(z_hr));
    return tape.value(tr.output);
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {
constexpr char kCkptMagic[8] = {'S', 'S', 'A', 'C', 'K', 'P', 'T', '1'};
}

const std::string* CheckpointFile::find_meta(const std::string& key) const {
    for (const auto& [k, v] : meta) {
        if (k == key) return &v;
    }
    return nullptr;
}

const Tensor4* CheckpointFile::find_tensor(const std::string& name) const {
    for (const auto& [k, v] : tensors) {
        if (k == name) return &v;
    }
    return nullptr;
}

void write_checkpoint_file(const std::string& path, const CheckpointFile& ckpt) {
    std::vector<char> out(kCkptMagic, kCkptMagic + 8);
    std::string meta;
    for (const auto& [k, v] : ckpt.meta) {
        if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos || v.find('\n') != std::string::npos) {
            throw ArgumentError("checkpoint metadata entry '" + k + "' contains '=' or a newline");
        }
        meta += k + "=" + v + "\n";
    }
    detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
    out.insert(out.end(), meta.begin(), meta.end());
    detail::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    std::vector<std::size_t> offset_slots;
    for (const auto& [name, t] : ckpt.tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        detail::put_u32(out, static_cast<std::uint32_t>(t.n()));
        detail::put_u32(out, static_cast<std::uint32_t>(t.c()));
        detail::put_u32(out, static_cast<std::uint32_t>(t.h()));
        detail::put_u32(out, static_cast<std::uint32_t>(t.w()));
        offset_slots.push_back(out.size());
        detail::put_u64(out, 0);
    }
    for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
        detail::set_u64(out, offset_slots[i], out.size());
        for (float v : ckpt.tensors[i].second.values()) detail::put_f32(out, v);
    }
    detail::write_file_bytes(path, out);
}

CheckpointFile read_checkpoint_file(const std::string& path) {
    const auto bytes = detail::read_file_bytes(path);
    detail::ByteReader rd(bytes, path);
    if (rd.bytes(8) != std::string(kCkptMagic, 8)) rd.fail("bad magic (expected SSACKPT1)", 0);
    CheckpointFile ck;
    const std::size_t meta_at = rd.offset();
    const std::uint32_t meta_len = rd.u32();
    std::istringstream ms(rd.bytes(meta_len));
    std::string line;
    while (std::getline(ms, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) rd.fail("malformed metadata line '" + line + "'", meta_at);
        ck.meta.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    const std::uint32_t count = rd.u32();
    struct Entry {
        std::string name;
        Shape4 dims;
        std::uint64_t offset;
        std::size_t manifest_at;
    };
    std::vector<Entry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        e.manifest_at = rd.offset();
        e.name = rd.bytes(rd.u32());
        e.dims.n = static_cast<int>(rd.u32());
        e.dims.c = static_cast<int>(rd.u32());
        e.dims.h = static_cast<int>(rd.u32());
        e.dims.w = static_cast<int>(rd.u32());
        e.offset = rd.u64();
        if (e.dims.n < 0 || e.dims.c < 0 || e.dims.h < 0 || e.dims.w < 0) rd.fail("negative dims", e.manifest_at);
        entries.push_back(std::move(e));
    }
    std::uint64_t end = rd.offset();
    for (const Entry& e : entries) {
        const std::uint64_t nbytes = static_cast<std::uint64_t>(e.dims.numel()) * 4;
        end = std::max<std::uint64_t>(end, e.offset + nbytes);
        if (e.offset > bytes.size() || nbytes > bytes.size() - e.offset) {
            rd.fail("tensor '" + e.name + "' data truncated (offset " + std::to_string(e.offset) + ")", e.manifest_at);
        }
        rd.seek(e.offset);
        std::vector<float> data(e.dims.numel());
        for (float& v : data) v = rd.f32();
        ck.tensors.emplace_back(e.name, Tensor4(e.dims, std::move(data)));
    }
    if (end != bytes.size()) rd.fail(std::to_string(bytes.size() - end) + " trailing bytes after tensor data", end);
    return ck;
}

void append_model_meta(const ModelConfig& cfg, CheckpointFile& ckpt) {
    ckpt.meta.emplace_back("model.d_feat", std::to_string(cfg.d_feat));
    ckpt.meta.emplace_back("model.c_max", std::to_string(cfg.c_max));
    ckpt.meta.emplace_back("model.enc_spe_depth", std::to_string(cfg.enc_spe_depth));
    ckpt.meta.emplace_back("model.enc_spa_depth", std::to_string(cfg.enc_spa_depth));
    ckpt.meta.emplace_back("model.decoder_hidden", std::to_string(cfg.decoder_hidden));
    ckpt.meta.emplace_back("model.decoder_layers", std::to_string(cfg.decoder_layers));
}

ModelConfig model_config_from_meta(const CheckpointFile& ckpt) {
    auto get = [&](const char* key) {
        const std::string* v = ckpt.find_meta(key);
        if (v == nullptr) throw FormatError(std::string("checkpoint metadata lacks '") + key + "'");
        try {
            return std::stoi(*v);
        } catch (const std::exception&) {
            throw FormatError(std::string("checkpoint metadata '") + key + "' is not an integer: " + *v);
        }
    };
    ModelConfig cfg;
    cfg.d_feat = get("model.d_feat");
    cfg.c_max = get("model.c_max");
    cfg.enc_spe_depth = get("model.enc_spe_depth");
    cfg.enc_spa_depth = get("model.enc_spa_depth");
    cfg.decoder_hidden = get("model.decoder_hidden");
    cfg.decoder_layers = get("model.decoder_layers");
    return cfg;
}

void append_model_tensors(const Model& model, CheckpointFile& ckpt) {
    for (const Parameter<float>* p : model.parameters()) ckpt.tensors.emplace_back(p->name, p->value);
}

Model model_from_checkpoint(const CheckpointFile& ckpt) {
    ModelConfig cfg = model_config_from_meta(ckpt);
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint holds an invalid model config: ") + e.what());
    }
    Model model(cfg);
    for (Parameter<float>* p : model.parameters()) {
        const Tensor4* t = ckpt.find_tensor(p->name);
        if (t == nullptr) throw FormatError("checkpoint lacks parameter '" + p->name + "'");
        if (t->dims() != p->value.dims()) {
            throw FormatError("checkpoint parameter '" + p->name + "' has dims " + to_string(t->dims()) +
                              ", expected " + to_string(p->value.dims()));
        }
        p->value = *t;
    }
    return model;
}

void save_model(const Model& model, const std::string& path) {
    CheckpointFile ck;
    append_model_meta(model.config(), ck);
    append_model_tensors(model, ck);
    write_checkpoint_file(path, ck);
}

Model load_model(const std::string& path) { return model_from_checkpoint(read_checkpoint_file(path)); }

#define SSA_INSTANTIATE_MODEL(T)                                                                               \
    template class FusionModel<T>;                                                                            \
    template Var encode(Tape<T>&, ResidualEncoder<T>&, Var);                                                  \
    template DecodeOutput<T> decode_queries(Tape<T>&, FusionModel<T>&, Var, Var, std::span<const DecodeQuery>); \
    template std::vector<T> decode_residual(const FusionModel<T>&, const BasicTensor4<T>&, const BasicTensor4<T>&, \
                                            const QueryPoint&, std::array<int, 2>);                           \
    template FuseTrace<T> fuse(Tape<T>&, FusionModel<T>&, Var, Var);                                          \
    template BasicTensor4<T> fuse(const FusionModel<T>&, const BasicTensor4<T>&, const BasicTensor4<T>&);

SSA_INSTANTIATE_MODEL(float)
SSA_INSTANTIATE_MODEL(double)
template FusionModel<double> FusionModel<float>::cast<double>() const;
template FusionModel<float> FusionModel<double>::cast<float>() const;

}  // namespace ssa
