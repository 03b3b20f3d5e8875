#include "crow/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "crow/stats.hpp"

namespace crow {

namespace {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* field) {
    std::uint64_t bits = u64(field);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string str(const char* field) {
    std::uint32_t len = u32(field);
    need(len, field);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
    pos_ += len;
    return s;
  }
  void f64_block(double* dst, std::size_t count, const char* field) {
    need(8 * count, field);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + 8 * i + k])) << (8 * k);
      std::memcpy(dst + i, &bits, sizeof(double));
    }
    pos_ += 8 * count;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) {
    if (pos_ + n > bytes_.size()) {
      throw std::runtime_error(path_ + ": truncated file: expected " + std::to_string(n) +
                               " bytes for " + field + " at offset " + std::to_string(pos_) +
                               ", only " + std::to_string(bytes_.size() - pos_) + " available");
    }
  }
  std::vector<char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

void atomic_write(const std::string& path, const std::vector<char>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void atomic_write(const std::string& path, const std::string& text) {
  atomic_write(path, std::vector<char>(text.begin(), text.end()));
}

std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_header(ByteWriter& w, std::uint32_t kind) {
  w.raw("CROW", 4);
  w.u32(kFormatVersion);
  w.u32(kind);
}

void check_header(ByteReader& r, const std::string& path, std::uint32_t expected_kind) {
  std::uint32_t magic = r.u32("magic");
  const std::uint32_t want = 'C' | ('R' << 8) | ('O' << 16) | ('W' << 24);
  if (magic != want) {
    throw std::runtime_error(path + ": not a CROW container (bad magic)");
  }
  std::uint32_t version = r.u32("version");
  if (version != kFormatVersion) {
    throw std::runtime_error(path + ": incompatible container version " + std::to_string(version) +
                             ", this build reads version " + std::to_string(kFormatVersion));
  }
  std::uint32_t kind = r.u32("kind");
  if (kind != expected_kind) {
    throw std::runtime_error(path + ": container kind " + std::to_string(kind) +
                             " does not match expected " + std::to_string(expected_kind));
  }
}

void write_tensor(ByteWriter& w, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(t.ndim()));
  for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < t.size(); ++i) w.f64(t[i]);
}

void read_tensor_into(ByteReader& r, Tensor& t, const std::string& name) {
  std::uint32_t ndim = r.u32("tensor rank");
  std::vector<std::size_t> shape(ndim);
  for (auto& d : shape) d = r.u32("tensor dim");
  if (shape != t.shape()) {
    throw std::runtime_error("parameter " + name + ": stored shape " + shape_str(shape) +
                             " does not match expected " + t.shape_str());
  }
  r.f64_block(t.data(), t.size(), name.c_str());
}

}  // namespace

void save_model(const FlowModel& m, const std::string& path) {
  ByteWriter w;
  write_header(w, kKindModel);
  const FlowConfig& c = m.config;
  w.u32(static_cast<std::uint32_t>(c.d_x));
  w.u32(static_cast<std::uint32_t>(c.d_y));
  w.u32(static_cast<std::uint32_t>(c.d_z));
  w.u32(static_cast<std::uint32_t>(c.d_total));
  w.u32(static_cast<std::uint32_t>(c.n_blocks));
  w.u32(static_cast<std::uint32_t>(c.hidden));
  w.u32(c.split.kind == SplitKind::Checkerboard ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(c.split.rows));
  w.u32(static_cast<std::uint32_t>(c.split.cols));
  w.f64(c.s_max);
  w.u64(c.seed);
  visit_params(m, [&](const std::string&, const Tensor& t) { write_tensor(w, t); });
  atomic_write(path, w.bytes());
}

FlowModel load_model(const std::string& path) {
  ByteReader r(read_all(path), path);
  check_header(r, path, kKindModel);
  FlowConfig c;
  c.d_x = r.u32("d_x");
  c.d_y = r.u32("d_y");
  c.d_z = r.u32("d_z");
  c.d_total = r.u32("d_total");
  c.n_blocks = r.u32("n_blocks");
  c.hidden = r.u32("hidden");
  c.split.kind = r.u32("split kind") == 1 ? SplitKind::Checkerboard : SplitKind::Halves;
  c.split.rows = r.u32("split rows");
  c.split.cols = r.u32("split cols");
  c.s_max = r.f64("s_max");
  c.seed = r.u64("seed");
  FlowModel m = init_model(c);
  visit_params(m, [&](const std::string& name, Tensor& t) { read_tensor_into(r, t, name); });
  if (!r.exhausted()) {
    throw std::runtime_error(path + ": " + std::to_string(r.remaining()) +
                             " unexpected trailing bytes");
  }
  return m;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  ByteWriter w;
  write_header(w, kKindDataset);
  w.u32(static_cast<std::uint32_t>(ds.meta.d_x));
  w.u32(static_cast<std::uint32_t>(ds.meta.d_y));
  w.u32(static_cast<std::uint32_t>(ds.meta.T));
  w.str(ds.meta.kind);
  w.u64(ds.meta.seed);
  w.u32(static_cast<std::uint32_t>(ds.meta.rows));
  w.u32(static_cast<std::uint32_t>(ds.meta.cols));
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  for (const SequenceSample& s : ds.samples) {
    for (const Tensor& f : s.frames)
      for (std::size_t i = 0; i < f.size(); ++i) w.f64(f[i]);
    for (const Tensor& y : s.covariates)
      for (std::size_t i = 0; i < y.size(); ++i) w.f64(y[i]);
  }
  atomic_write(path, w.bytes());
}

Dataset load_dataset(const std::string& path) {
  ByteReader r(read_all(path), path);
  check_header(r, path, kKindDataset);
  Dataset ds;
  ds.meta.d_x = r.u32("d_x");
  ds.meta.d_y = r.u32("d_y");
  ds.meta.T = r.u32("T");
  ds.meta.kind = r.str("kind");
  ds.meta.seed = r.u64("seed");
  ds.meta.rows = r.u32("rows");
  ds.meta.cols = r.u32("cols");
  const std::uint32_t n = r.u32("sample count");
  ds.samples.resize(n);
  for (auto& s : ds.samples) {
    s.frames.assign(ds.meta.T, Tensor({ds.meta.d_x}));
    s.covariates.assign(ds.meta.T, Tensor({ds.meta.d_y}));
    for (auto& f : s.frames) r.f64_block(f.data(), f.size(), "frame data");
    for (auto& y : s.covariates) r.f64_block(y.data(), y.size(), "covariate data");
  }
  if (!r.exhausted()) {
    throw std::runtime_error(path + ": " + std::to_string(r.remaining()) +
                             " unexpected trailing bytes");
  }
  ds.validate();
  return ds;
}

void write_frames_pgm(const SequenceSample& sample, std::size_t rows, std::size_t cols,
                      const std::string& dir) {
  if (rows * cols == 0 || sample.frames.empty() || sample.frames[0].width() != rows * cols) {
    throw std::invalid_argument("write_frames_pgm: frame width does not match grid " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < sample.frames.size(); ++t) {
    const Tensor& f = sample.frames[t];
    std::ostringstream header;
    header << "P5\n" << cols << " " << rows << "\n255\n";
    const std::string head = header.str();
    std::vector<char> bytes(head.begin(), head.end());
    for (std::size_t i = 0; i < f.size(); ++i) {
      double v = std::min(1.0, std::max(0.0, f[i]));
      bytes.push_back(static_cast<char>(static_cast<unsigned char>(v * 255.0 + 0.5)));
    }
    atomic_write(dir + "/frame_" + std::to_string(t + 1) + ".pgm", bytes);
  }
}

PgmImage read_pgm(const std::string& path) {
  std::vector<char> bytes = read_all(path);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255) {
    throw std::runtime_error(path + ": not a maxval-255 P5 PGM");
  }
  in.get();  // single whitespace after header
  PgmImage img;
  img.rows = h;
  img.cols = w;
  const std::size_t offset = static_cast<std::size_t>(in.tellg());
  if (bytes.size() - offset < w * h) {
    throw std::runtime_error(path + ": truncated pixel data");
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(offset + w * h));
  return img;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<Tensor> read_conditions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty conditions file");
  // header: t,y_1,...,y_{d_y}
  std::size_t d_y = 0;
  for (char ch : line)
    if (ch == ',') ++d_y;
  if (d_y == 0) throw std::runtime_error(path + ": header must be t,y_1,...,y_d");
  std::vector<Tensor> covariates;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    if (!std::getline(row, cell, ',')) continue;  // t column, informational
    Tensor y({d_y});
    for (std::size_t i = 0; i < d_y; ++i) {
      if (!std::getline(row, cell, ',')) {
        throw std::runtime_error(path + ": row " + std::to_string(covariates.size() + 1) +
                                 " has fewer than " + std::to_string(d_y) + " covariates");
      }
      y[i] = std::stod(cell);
    }
    covariates.push_back(std::move(y));
  }
  if (covariates.empty()) throw std::runtime_error(path + ": no covariate rows");
  return covariates;
}

void write_conditions_csv(const std::vector<Tensor>& covariates, const std::string& path) {
  std::ostringstream os;
  os << "t";
  for (std::size_t i = 1; i <= covariates.at(0).width(); ++i) os << ",y_" << i;
  os << "\n";
  for (std::size_t t = 0; t < covariates.size(); ++t) {
    os << (t + 1);
    for (std::size_t i = 0; i < covariates[t].width(); ++i) {
      os << "," << format_double(covariates[t][i]);
    }
    os << "\n";
  }
  atomic_write(path, os.str());
}

void write_density_csv(const std::vector<DensityRow>& rows, const std::string& path) {
  std::ostringstream os;
  os << "seq_id,t,logdet,log_density\n";
  for (const DensityRow& r : rows) {
    os << r.seq_id << "," << r.t << "," << format_double(r.logdet) << ","
       << format_double(r.log_density) << "\n";
  }
  atomic_write(path, os.str());
}

void write_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path) {
  std::ostringstream os;
  os << "epoch,loss_Z,loss_Y,loss_X,pad,grad_norm\n";
  for (const EpochMetrics& m : metrics) {
    os << m.epoch << "," << format_double(m.loss_Z) << "," << format_double(m.loss_Y) << ","
       << format_double(m.loss_X) << "," << format_double(m.pad) << ","
       << format_double(m.grad_norm) << "\n";
  }
  atomic_write(path, os.str());
}

void write_analysis_csv(const GroupStats& stats, const std::string& path) {
  std::ostringstream os;
  os << "feature,t_stat,p_raw,p_corrected,significant\n";
  for (std::size_t f = 0; f < stats.features.size(); ++f) {
    const FeatureStat& fs = stats.features[f];
    os << f << "," << format_double(fs.t_stat) << "," << format_double(fs.p_raw) << ","
       << format_double(fs.p_corrected) << "," << (fs.significant ? 1 : 0) << "\n";
  }
  atomic_write(path, os.str());
}

}  // namespace crow
