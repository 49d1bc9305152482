#include "began/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>

#include "began/rng.hpp"

namespace began {

namespace fs = std::filesystem;

// --- formatting helpers ---

namespace {

// shortest-exact is not needed; 17 significant digits round-trip doubles
std::string fmt_exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_sig9(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<uint64_t>(v)); }

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw std::runtime_error("truncated file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (is.gcount() != 8) throw std::runtime_error("truncated file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

// --- synthetic corpora ---

SyntheticFamily synthetic_family_from_string(const std::string& name) {
    if (name == "ellipses") return SyntheticFamily::ellipses;
    if (name == "rectangles") return SyntheticFamily::rectangles;
    if (name == "gaussian-blobs") return SyntheticFamily::gaussian_blobs;
    throw std::invalid_argument("unknown synthetic family '" + name + "'");
}

std::string to_string(SyntheticFamily family) {
    switch (family) {
        case SyntheticFamily::ellipses: return "ellipses";
        case SyntheticFamily::rectangles: return "rectangles";
        case SyntheticFamily::gaussian_blobs: return "gaussian-blobs";
    }
    return "?";
}

Tensor synthetic_item(const SyntheticSpec& spec, long index) {
    const int s = spec.image_size;
    const int c = spec.channels;
    Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(index)));

    std::vector<real> out(static_cast<size_t>(c) * s * s, real(-1));
    const double S = static_cast<double>(s);

    auto fill = [&](auto&& coverage) {
        std::vector<double> intensity(static_cast<size_t>(c));
        for (auto& ii : intensity) ii = rng.uniform(0.2, 1.0);
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                const double cov = coverage(x + 0.5, y + 0.5);
                if (cov <= 0.0) continue;
                for (int ch = 0; ch < c; ++ch) {
                    out[(static_cast<size_t>(ch) * s + y) * s + x] =
                        static_cast<real>(-1.0 + cov * (intensity[static_cast<size_t>(ch)] + 1.0));
                }
            }
        }
    };

    switch (spec.family) {
        case SyntheticFamily::ellipses: {
            const double cx = rng.uniform(0.3, 0.7) * S, cy = rng.uniform(0.3, 0.7) * S;
            const double a = rng.uniform(0.15, 0.35) * S, b = rng.uniform(0.15, 0.35) * S;
            fill([&](double px, double py) {
                const double dx = (px - cx) / a, dy = (py - cy) / b;
                const double r = std::sqrt(dx * dx + dy * dy);
                // ~1.5 px soft edge
                return std::clamp((1.0 - r) * std::min(a, b) / 1.5, 0.0, 1.0);
            });
            break;
        }
        case SyntheticFamily::rectangles: {
            const double x0 = rng.uniform(0.1, 0.5) * S, w = rng.uniform(0.2, 0.4) * S;
            const double y0 = rng.uniform(0.1, 0.5) * S, h = rng.uniform(0.2, 0.4) * S;
            fill([&](double px, double py) {
                return (px >= x0 && px <= x0 + w && py >= y0 && py <= y0 + h) ? 1.0 : 0.0;
            });
            break;
        }
        case SyntheticFamily::gaussian_blobs: {
            const double cx = rng.uniform(0.3, 0.7) * S, cy = rng.uniform(0.3, 0.7) * S;
            const double sx = rng.uniform(0.1, 0.25) * S, sy = rng.uniform(0.1, 0.25) * S;
            fill([&](double px, double py) {
                const double dx = (px - cx) / sx, dy = (py - cy) / sy;
                return std::exp(-0.5 * (dx * dx + dy * dy));
            });
            break;
        }
    }
    return Tensor(Shape{c, s, s}, std::move(out));
}

// --- dataset ---

Dataset Dataset::synthetic(const SyntheticSpec& spec) {
    if (spec.count < 1) throw std::invalid_argument("dataset: empty dataset");
    Dataset d;
    d.synthetic_ = true;
    d.spec_ = spec;
    d.count_ = spec.count;
    d.image_size_ = spec.image_size;
    d.channels_ = spec.channels;
    return d;
}

Dataset Dataset::from_directory(const std::string& dir, int image_size, int channels) {
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".rt") paths.push_back(e.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::invalid_argument("dataset: no .rt files in " + dir);

    Dataset d;
    d.synthetic_ = false;
    d.image_size_ = image_size;
    d.channels_ = channels;
    for (const auto& p : paths) {
        Tensor t = load_raw_tensor(p);
        if (t.ndim() != 3 || t.dim(0) != channels || t.dim(1) != image_size || t.dim(2) != image_size) {
            throw std::invalid_argument("dataset: " + p + " has shape " + shape_str(t.shape()) + ", expected [" +
                                        std::to_string(channels) + "," + std::to_string(image_size) + "," +
                                        std::to_string(image_size) + "]");
        }
        std::vector<real> v(t.data());
        for (auto& x : v) x = std::clamp(x, real(-1), real(1));
        d.items_.emplace_back(t.shape(), std::move(v));
    }
    d.count_ = static_cast<long>(d.items_.size());
    return d;
}

Tensor Dataset::item(long index) const {
    if (index < 0 || index >= count_) throw std::out_of_range("dataset item index out of range");
    if (synthetic_) return synthetic_item(spec_, index);
    return items_[static_cast<size_t>(index)];
}

Tensor Dataset::batch(const std::vector<long>& indices) const {
    if (indices.empty()) throw std::invalid_argument("batch: no indices");
    const int64_t per = static_cast<int64_t>(channels_) * image_size_ * image_size_;
    std::vector<real> out(static_cast<size_t>(per) * indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        Tensor t = item(indices[i]);
        std::copy_n(t.data().data(), per, out.data() + static_cast<int64_t>(i) * per);
    }
    return Tensor(Shape{static_cast<int>(indices.size()), channels_, image_size_, image_size_}, std::move(out));
}

// --- batcher ---

Batcher::Batcher(long item_count, int batch_size, uint64_t seed)
    : item_count_(item_count), batch_size_(batch_size), seed_(seed) {
    if (item_count < 1) throw std::invalid_argument("batcher: empty dataset");
    if (batch_size < 1) throw std::invalid_argument("batcher: batch_size must be >= 1");
}

const std::vector<long>& Batcher::epoch_perm(long epoch) const {
    if (cached_epoch_ == epoch) return cached_perm_;
    cached_perm_.resize(static_cast<size_t>(item_count_));
    for (long i = 0; i < item_count_; ++i) cached_perm_[static_cast<size_t>(i)] = i;
    Rng rng(derive_seed(seed_, static_cast<uint64_t>(epoch)));
    for (long i = item_count_ - 1; i > 0; --i) {
        const long j = static_cast<long>(rng.raw() % static_cast<uint64_t>(i + 1));
        std::swap(cached_perm_[static_cast<size_t>(i)], cached_perm_[static_cast<size_t>(j)]);
    }
    cached_epoch_ = epoch;
    return cached_perm_;
}

std::vector<long> Batcher::step_indices(long step) const {
    if (step < 0) throw std::invalid_argument("batcher: negative step");
    std::vector<long> out(static_cast<size_t>(batch_size_));
    for (int t = 0; t < batch_size_; ++t) {
        const long pos = step * batch_size_ + t;
        out[static_cast<size_t>(t)] = epoch_perm(pos / item_count_)[static_cast<size_t>(pos % item_count_)];
    }
    return out;
}

Tensor next_batch(const Dataset& dataset, const Batcher& batcher, long step) {
    return dataset.batch(batcher.step_indices(step));
}

// --- raw tensor files ---

void save_raw_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    put_u32(os, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) put_u32(os, static_cast<uint32_t>(t.dim(i)));
    for (real v : t.data()) put_f64(os, static_cast<double>(v));
    if (!os) throw std::runtime_error("write failed: " + path);
}

Tensor load_raw_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    const uint32_t rank = get_u32(is);
    if (rank > 8) throw std::runtime_error(path + ": implausible tensor rank");
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(get_u32(is));
    const int64_t n = shape_numel(shape);
    std::vector<real> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<real>(get_f64(is));
    return Tensor(std::move(shape), std::move(v));
}

// --- checkpoints ---

namespace {

constexpr char kMagic[8] = {'B', 'E', 'G', 'A', 'N', 'C', 'K', '1'};

std::string build_header(const Checkpoint& c) {
    std::ostringstream h;
    const ArchConfig& a = c.params.arch;
    h << "version = " << c.version << '\n';
    h << "arch.image_size = " << a.image_size << '\n';
    h << "arch.channels = " << a.channels << '\n';
    h << "arch.base_filters = " << a.base_filters << '\n';
    h << "arch.repeats_per_block = " << a.repeats_per_block << '\n';
    h << "arch.n_h = " << a.n_h << '\n';
    h << "arch.n_z = " << a.n_z << '\n';
    h << "arch.use_skip_connections = " << (a.use_skip_connections ? 1 : 0) << '\n';
    h << "arch.use_vanishing_residuals = " << (a.use_vanishing_residuals ? 1 : 0) << '\n';
    h << "arch.carry_decay_steps = " << a.carry_decay_steps << '\n';
    h << "step = " << c.step << '\n';
    h << "k = " << fmt_exact(c.k) << '\n';
    h << "lr = " << fmt_exact(c.lr) << '\n';
    h << "data_seed = " << c.data_seed << '\n';
    h << "stall.best = " << fmt_exact(c.stall_best) << '\n';
    h << "stall.since = " << c.stall_since << '\n';
    h << "adam_d.t = " << c.opt_d.t << '\n';
    h << "adam_g.t = " << c.opt_g.t << '\n';
    h << "rng.train = " << c.rng_train << '\n';
    h << "layout = params,adam_m,adam_v" << '\n';

    auto named = named_params(c.params);
    h << "tensor.count = " << named.size() << '\n';
    for (size_t i = 0; i < named.size(); ++i) {
        h << "tensor." << i << " = " << named[i].first;
        for (int d : named[i].second->shape()) h << ' ' << d;
        h << '\n';
    }
    return h.str();
}

std::map<std::string, std::string> parse_header(const std::string& text, std::vector<std::string>* tensor_lines) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto sep = line.find(" = ");
        if (sep == std::string::npos) throw std::runtime_error("checkpoint header: malformed line '" + line + "'");
        const std::string key = line.substr(0, sep);
        const std::string value = line.substr(sep + 3);
        if (key.rfind("tensor.", 0) == 0 && key != "tensor.count") {
            tensor_lines->push_back(value);
        } else {
            kv[key] = value;
        }
    }
    return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("checkpoint header: missing key '" + key + "'");
    return it->second;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path);
    os.write(kMagic, 8);
    const std::string header = build_header(ckpt);
    put_u64(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));

    auto named = named_params(ckpt.params);
    for (const auto& [name, t] : named) {
        (void)name;
        for (real v : t->data()) put_f64(os, static_cast<double>(v));
    }
    const size_t nd = ckpt.opt_d.m.size();
    const size_t ng = ckpt.opt_g.m.size();
    if (nd + ng != named.size()) throw std::runtime_error("save_checkpoint: optimizer state does not cover parameters");
    // first moments for every tensor, then second moments, in tensor order
    for (const auto& arr : ckpt.opt_d.m)
        for (double v : arr) put_f64(os, v);
    for (const auto& arr : ckpt.opt_g.m)
        for (double v : arr) put_f64(os, v);
    for (const auto& arr : ckpt.opt_d.v)
        for (double v : arr) put_f64(os, v);
    for (const auto& arr : ckpt.opt_g.v)
        for (double v : arr) put_f64(os, v);
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint " + path);
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error(path + ": not a BEGANCK1 checkpoint (magic/version mismatch)");
    }
    const uint64_t hlen = get_u64(is);
    std::string header(hlen, '\0');
    is.read(header.data(), static_cast<std::streamsize>(hlen));
    if (static_cast<uint64_t>(is.gcount()) != hlen) throw std::runtime_error(path + ": truncated header");

    std::vector<std::string> tensor_lines;
    auto kv = parse_header(header, &tensor_lines);

    Checkpoint c;
    c.version = std::stoi(require(kv, "version"));
    if (c.version != 1) throw std::runtime_error(path + ": unsupported checkpoint version");
    ArchConfig a;
    a.image_size = std::stoi(require(kv, "arch.image_size"));
    a.channels = std::stoi(require(kv, "arch.channels"));
    a.base_filters = std::stoi(require(kv, "arch.base_filters"));
    a.repeats_per_block = std::stoi(require(kv, "arch.repeats_per_block"));
    a.n_h = std::stoi(require(kv, "arch.n_h"));
    a.n_z = std::stoi(require(kv, "arch.n_z"));
    a.use_skip_connections = std::stoi(require(kv, "arch.use_skip_connections")) != 0;
    a.use_vanishing_residuals = std::stoi(require(kv, "arch.use_vanishing_residuals")) != 0;
    a.carry_decay_steps = std::stoi(require(kv, "arch.carry_decay_steps"));

    c.step = std::stol(require(kv, "step"));
    c.k = std::stod(require(kv, "k"));
    c.lr = std::stod(require(kv, "lr"));
    c.data_seed = std::stoull(require(kv, "data_seed"));
    c.stall_best = std::stod(require(kv, "stall.best"));
    c.stall_since = std::stol(require(kv, "stall.since"));
    c.rng_train = require(kv, "rng.train");

    c.params = build_models(a, 0);  // skeleton; values overwritten below
    auto named = named_params(c.params);
    const size_t count = std::stoul(require(kv, "tensor.count"));
    if (count != named.size() || count != tensor_lines.size()) {
        throw std::runtime_error(path + ": tensor list does not match architecture");
    }

    std::vector<Tensor*> targets;
    for (Tensor* t : discriminator_tensors(c.params)) targets.push_back(t);
    for (Tensor* t : generator_tensors(c.params)) targets.push_back(t);

    for (size_t i = 0; i < count; ++i) {
        std::istringstream ls(tensor_lines[i]);
        std::string name;
        ls >> name;
        Shape shape;
        int d;
        while (ls >> d) shape.push_back(d);
        if (name != named[i].first || shape != targets[i]->shape()) {
            throw std::runtime_error(path + ": shape disagreement with header at tensor '" + name + "'");
        }
        std::vector<real> v(static_cast<size_t>(shape_numel(shape)));
        for (auto& x : v) x = static_cast<real>(get_f64(is));
        *targets[i] = Tensor(shape, std::move(v));
    }

    const size_t nd = discriminator_tensors(c.params).size();
    c.opt_d.t = std::stol(require(kv, "adam_d.t"));
    c.opt_g.t = std::stol(require(kv, "adam_g.t"));
    auto read_moments = [&](std::vector<std::vector<double>>& dst, size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) {
            std::vector<double> arr(static_cast<size_t>(targets[i]->size()));
            for (auto& x : arr) x = get_f64(is);
            dst.push_back(std::move(arr));
        }
    };
    read_moments(c.opt_d.m, 0, nd);
    read_moments(c.opt_g.m, nd, count);
    read_moments(c.opt_d.v, 0, nd);
    read_moments(c.opt_g.v, nd, count);

    is.peek();
    if (!is.eof()) throw std::runtime_error(path + ": trailing bytes after checkpoint payload");
    return c;
}

std::string checkpoint_header_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint " + path);
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error(path + ": not a BEGANCK1 checkpoint (magic/version mismatch)");
    }
    const uint64_t hlen = get_u64(is);
    std::string header(hlen, '\0');
    is.read(header.data(), static_cast<std::streamsize>(hlen));
    if (static_cast<uint64_t>(is.gcount()) != hlen) throw std::runtime_error(path + ": truncated header");
    return header;
}

// --- PPM export ---

void export_image_grid(const Tensor& images, int columns, const std::string& path) {
    if (images.ndim() != 4) throw std::invalid_argument("export_image_grid: expected [b,C,H,W]");
    if (columns < 1) throw std::invalid_argument("export_image_grid: columns must be >= 1");
    const int b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
    const int rows = (b + columns - 1) / columns;
    const int W = columns * w, H = rows * h;

    std::vector<unsigned char> pix(static_cast<size_t>(W) * H * 3, 0);
    const real* src = images.data().data();
    for (int i = 0; i < b; ++i) {
        const int gr = i / columns, gc = i % columns;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                unsigned char* px = pix.data() + 3 * (static_cast<size_t>(gr * h + y) * W + gc * w + x);
                for (int ch = 0; ch < 3; ++ch) {
                    const int sc = (c == 1) ? 0 : std::min(ch, c - 1);
                    double v = static_cast<double>(src[((static_cast<int64_t>(i) * c + sc) * h + y) * w + x]);
                    v = std::clamp(v, -1.0, 1.0);
                    // round half up: -1 -> 0, 0 -> 128, 1 -> 255
                    px[ch] = static_cast<unsigned char>(std::floor((v + 1.0) * 127.5 + 0.5));
                }
            }
        }
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write image " + path);
    os << "P6\n" << W << ' ' << H << "\n255\n";
    os.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
    if (!os) throw std::runtime_error("image write failed: " + path);
}

// --- metrics ---

MetricsCsv::MetricsCsv(const std::string& path, bool append) : path_(path) {
    const bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
    out_.open(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    if (!out_) throw std::runtime_error("cannot open metrics file " + path);
    if (fresh) {
        out_ << "step,loss_real,loss_fake_d,loss_fake_g,k,m_global,lr,carry\n";
        out_.flush();
    }
}

void MetricsCsv::write(const StepRecord& r) {
    out_ << r.step << ',' << fmt_sig9(r.loss_real) << ',' << fmt_sig9(r.loss_fake_d) << ',' << fmt_sig9(r.loss_fake_g)
         << ',' << fmt_sig9(r.k) << ',' << fmt_sig9(r.m_global) << ',' << fmt_sig9(r.lr) << ',' << fmt_sig9(r.carry)
         << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error("metrics write failed: " + path_);
}

std::vector<StepRecord> read_metrics(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read metrics file " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error(path + ": empty metrics file");
    if (line != "step,loss_real,loss_fake_d,loss_fake_g,k,m_global,lr,carry") {
        throw std::runtime_error(path + ": unexpected metrics header");
    }
    std::vector<StepRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        StepRecord r;
        char comma;
        ls >> r.step >> comma >> r.loss_real >> comma >> r.loss_fake_d >> comma >> r.loss_fake_g >> comma >> r.k >>
            comma >> r.m_global >> comma >> r.lr >> comma >> r.carry;
        if (ls.fail()) throw std::runtime_error(path + ": malformed metrics row '" + line + "'");
        out.push_back(r);
    }
    return out;
}

}  // namespace began
