#include "flsim/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "flsim/crc32.hpp"
#include "flsim/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "serializers write native byte order and assume little-endian");

namespace flsim {

namespace {

// Buffered writer: the CRC must cover every byte, so all output funnels
// through here before being flushed to the stream in one piece.
class Buffer {
public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    data_.insert(data_.end(), p, p + sizeof v);
  }

  void put_bytes(const void* p, std::size_t len) {
    const auto* c = static_cast<const char*>(p);
    data_.insert(data_.end(), c, c + len);
  }

  void finish(std::ostream& out) {
    const std::uint32_t crc = Crc32::of(data_.data(), data_.size());
    put(crc);
    out.write(data_.data(), static_cast<std::streamsize>(data_.size()));
    if (!out) throw FormatError("write failed after " + std::to_string(data_.size()) +
                                " bytes");
  }

private:
  std::vector<char> data_;
};

// Reader that tracks offsets for diagnostics and CRC-checks the whole
// payload once the trailer offset is known.
class Reader {
public:
  Reader(std::istream& in, const std::string& origin) : origin_(origin) {
    std::ostringstream ss;
    ss << in.rdbuf();
    data_ = ss.str();
    if (data_.size() < 8)
      throw FormatError(origin_ + ": truncated, only " +
                        std::to_string(data_.size()) + " bytes");
    const std::size_t body = data_.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, data_.data() + body, 4);
    const std::uint32_t actual = Crc32::of(data_.data(), body);
    if (stored != actual) {
      std::ostringstream msg;
      msg << origin_ << ": crc32 mismatch at offset " << body << " (stored 0x"
          << std::hex << stored << ", computed 0x" << actual << ")";
      throw FormatError(msg.str());
    }
    end_ = body;
  }

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }

  std::string get_string(std::size_t len) {
    need(len);
    std::string s(data_.data() + pos_, len);
    pos_ += len;
    return s;
  }

  void get_floats(float* dst, std::size_t count) {
    need(count * sizeof(float));
    std::memcpy(dst, data_.data() + pos_, count * sizeof(float));
    pos_ += count * sizeof(float);
  }

  std::size_t offset() const { return pos_; }

  void expect_done() const {
    if (pos_ != end_)
      throw FormatError(origin_ + ": " + std::to_string(end_ - pos_) +
                        " unexpected trailing bytes at offset " + std::to_string(pos_));
  }

  void need(std::size_t n) const {
    if (pos_ + n > end_)
      throw FormatError(origin_ + ": truncated at offset " + std::to_string(pos_) +
                        " (need " + std::to_string(n) + " more bytes)");
  }

  const std::string& origin() const { return origin_; }

private:
  std::string origin_;
  std::string data_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

void check_magic(Reader& r, const char* magic) {
  const std::string got = r.get_string(4);
  if (got != magic) {
    std::ostringstream msg;
    msg << r.origin() << ": bad magic at offset 0, expected '" << magic << "'";
    throw FormatError(msg.str());
  }
}

constexpr std::uint16_t kDatasetVersion = 1;
constexpr std::uint16_t kModelVersion = 1;

void append_samples(Buffer& buf, const std::vector<FlowSample>& samples,
                    const std::map<std::string, std::uint16_t>& tags) {
  for (const auto& s : samples) {
    buf.put<std::uint16_t>(tags.at(s.attack_tag));
    buf.put<std::uint8_t>(s.label);
    for (Eigen::Index r = 0; r < s.features.rows(); ++r)
      for (Eigen::Index c = 0; c < s.features.cols(); ++c)
        buf.put<float>(s.features(r, c));
  }
}

}  // namespace

void save_dataset(const DatasetSplit& split, std::ostream& out) {
  const std::vector<const std::vector<FlowSample>*> parts = {
      &split.train, &split.validation, &split.test};

  Eigen::Index n = kFlowPackets, f = kPacketFeatures;
  const std::size_t total = split.size();
  if (total == 0) throw DataError("save_dataset: empty dataset");
  if (total > 0xffffffffull) throw DataError("save_dataset: too many samples");
  for (const auto* part : parts)
    for (const auto& s : *part) {
      n = s.features.rows();
      f = s.features.cols();
      break;
    }
  for (const auto* part : parts)
    for (const auto& s : *part) {
      if (s.features.rows() != n || s.features.cols() != f)
        throw ShapeError("save_dataset: inconsistent sample geometry");
      if (!padding_ok(s.features))
        throw DataError("save_dataset: sample with non-contiguous padding");
    }

  // Tag table in first-appearance order keeps the byte stream reproducible.
  std::map<std::string, std::uint16_t> tags;
  std::vector<std::string> tag_order;
  for (const auto* part : parts)
    for (const auto& s : *part)
      if (tags.emplace(s.attack_tag, static_cast<std::uint16_t>(tag_order.size()))
              .second)
        tag_order.push_back(s.attack_tag);
  if (tag_order.size() > 0xffff) throw DataError("save_dataset: too many tags");

  Buffer buf;
  buf.put_bytes("FLND", 4);
  buf.put<std::uint16_t>(kDatasetVersion);
  buf.put<std::uint16_t>(static_cast<std::uint16_t>(n));
  buf.put<std::uint16_t>(static_cast<std::uint16_t>(f));
  buf.put<std::uint32_t>(static_cast<std::uint32_t>(total));
  for (std::size_t part = 0; part < parts.size(); ++part)
    for (std::size_t i = 0; i < parts[part]->size(); ++i)
      buf.put<std::uint8_t>(static_cast<std::uint8_t>(part));
  buf.put<std::uint16_t>(static_cast<std::uint16_t>(tag_order.size()));
  for (const auto& t : tag_order) {
    if (t.size() > 0xffff) throw DataError("save_dataset: tag too long");
    buf.put<std::uint16_t>(static_cast<std::uint16_t>(t.size()));
    buf.put_bytes(t.data(), t.size());
  }
  for (const auto* part : parts) append_samples(buf, *part, tags);
  buf.finish(out);
}

DatasetSplit load_dataset(std::istream& in, const std::string& origin) {
  Reader r(in, origin);
  check_magic(r, "FLND");
  const auto version = r.get<std::uint16_t>();
  if (version != kDatasetVersion)
    throw FormatError(origin + ": unsupported version " + std::to_string(version) +
                      " at offset 4");
  const auto n = r.get<std::uint16_t>();
  const auto f = r.get<std::uint16_t>();
  const auto count = r.get<std::uint32_t>();
  if (n == 0 || f == 0)
    throw FormatError(origin + ": zero flow geometry at offset 6");

  std::vector<std::uint8_t> membership(count);
  for (auto& m : membership) {
    m = r.get<std::uint8_t>();
    if (m > 2)
      throw FormatError(origin + ": bad split membership " + std::to_string(m) +
                        " at offset " + std::to_string(r.offset() - 1));
  }

  const auto tag_count = r.get<std::uint16_t>();
  std::vector<std::string> tags(tag_count);
  for (auto& t : tags) t = r.get_string(r.get<std::uint16_t>());

  DatasetSplit out;
  for (std::uint32_t i = 0; i < count; ++i) {
    FlowSample s;
    const auto tag_idx = r.get<std::uint16_t>();
    if (tag_idx >= tag_count)
      throw FormatError(origin + ": tag index " + std::to_string(tag_idx) +
                        " out of range at offset " + std::to_string(r.offset() - 3));
    s.attack_tag = tags[tag_idx];
    s.label = r.get<std::uint8_t>();
    if (s.label > 1)
      throw FormatError(origin + ": bad label at offset " +
                        std::to_string(r.offset() - 1));
    s.features.resize(n, f);
    {
      std::vector<float> tmp(static_cast<std::size_t>(n) * f);
      r.get_floats(tmp.data(), tmp.size());
      std::size_t k = 0;
      for (Eigen::Index row = 0; row < n; ++row)
        for (Eigen::Index col = 0; col < f; ++col) s.features(row, col) = tmp[k++];
    }
    switch (membership[i]) {
      case 0: out.train.push_back(std::move(s)); break;
      case 1: out.validation.push_back(std::move(s)); break;
      default: out.test.push_back(std::move(s)); break;
    }
  }
  r.expect_done();

  // The client-level tag is the join of distinct attack tags in appearance
  // order; pure-benign files keep "benign".
  std::vector<std::string> attack_tags;
  for (const auto* part : {&out.train, &out.validation, &out.test})
    for (const auto& s : *part)
      if (s.attack_tag != "benign" &&
          std::find(attack_tags.begin(), attack_tags.end(), s.attack_tag) ==
              attack_tags.end())
        attack_tags.push_back(s.attack_tag);
  if (attack_tags.empty()) {
    out.attack_tag = "benign";
  } else {
    out.attack_tag = attack_tags[0];
    for (std::size_t i = 1; i < attack_tags.size(); ++i)
      out.attack_tag += "+" + attack_tags[i];
  }
  return out;
}

namespace {
void atomic_write(const std::string& path,
                  const std::function<void(std::ostream&)>& writer) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp + "' for writing");
    writer(out);
  }
  std::filesystem::rename(tmp, path);
}
}  // namespace

void save_dataset_file(const DatasetSplit& split, const std::string& path) {
  atomic_write(path, [&](std::ostream& out) { save_dataset(split, out); });
}

DatasetSplit load_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file '" + path + "'");
  return load_dataset(in, path);
}

void save_model(const MlpParams<float>& params, std::ostream& out) {
  if (params.weights.empty()) throw ShapeError("save_model: uninitialized model");
  if (params.dims.size() != params.weights.size() + 1)
    throw ShapeError("save_model: dims/weights mismatch");
  Buffer buf;
  buf.put_bytes("FLMP", 4);
  buf.put<std::uint16_t>(kModelVersion);
  buf.put<std::uint16_t>(static_cast<std::uint16_t>(params.weights.size()));
  for (int d : params.dims) buf.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) buf.put<float>(w(r, c));
    const auto& b = params.biases[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) buf.put<float>(b[i]);
  }
  buf.finish(out);
}

MlpParams<float> load_model(std::istream& in, const std::string& origin) {
  Reader r(in, origin);
  check_magic(r, "FLMP");
  const auto version = r.get<std::uint16_t>();
  if (version != kModelVersion)
    throw FormatError(origin + ": unsupported version " + std::to_string(version) +
                      " at offset 4");
  const auto layers = r.get<std::uint16_t>();
  if (layers == 0)
    throw FormatError(origin + ": zero layer count at offset 6");
  MlpParams<float> p;
  p.dims.resize(layers + 1u);
  for (auto& d : p.dims) {
    const auto v = r.get<std::uint32_t>();
    if (v == 0 || v > 0x7fffffffu)
      throw FormatError(origin + ": bad layer width at offset " +
                        std::to_string(r.offset() - 4));
    d = static_cast<int>(v);
  }
  for (std::uint16_t l = 0; l < layers; ++l) {
    MatX<float> w(p.dims[l + 1u], p.dims[l]);
    for (Eigen::Index row = 0; row < w.rows(); ++row) {
      std::vector<float> tmp(static_cast<std::size_t>(w.cols()));
      r.get_floats(tmp.data(), tmp.size());
      for (Eigen::Index col = 0; col < w.cols(); ++col) w(row, col) = tmp[static_cast<std::size_t>(col)];
    }
    VecX<float> b(p.dims[l + 1u]);
    r.get_floats(b.data(), static_cast<std::size_t>(b.size()));
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  r.expect_done();
  return p;
}

void save_model_file(const MlpParams<float>& params, const std::string& path) {
  atomic_write(path, [&](std::ostream& out) { save_model(params, out); });
}

MlpParams<float> load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  return load_model(in, path);
}

std::uint32_t model_crc32(const MlpParams<float>& params) {
  std::ostringstream ss;
  save_model(params, ss);
  const std::string bytes = ss.str();
  // Skip the stored trailer: crc32 of (payload ++ crc32(payload)) is the same
  // residue constant for every payload, which would make all fingerprints equal.
  return Crc32::of(bytes.data(), bytes.size() - 4);
}

std::vector<std::string> csv_feature_columns() {
  std::vector<std::string> cols;
  for (int r = 0; r < kFlowPackets; ++r)
    for (const char* name : kFeatureNames) {
      std::string n = name;
      std::transform(n.begin(), n.end(), n.begin(),
                     [](unsigned char c) { return c == ' ' ? '_' : std::tolower(c); });
      cols.push_back("p" + std::to_string(r) + "_" + n);
    }
  return cols;
}

namespace {
std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}
}  // namespace

std::vector<FlowSample> ingest_csv(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line))
    throw FormatError(origin + ": empty file, expected a header line");
  const auto header = split_line(line);
  const auto expected_cols = csv_feature_columns();
  const std::size_t want = expected_cols.size() + 2;
  if (header.size() != want)
    throw FormatError(origin + ": header has " + std::to_string(header.size()) +
                      " columns, expected " + std::to_string(want) + " (attack_tag, " +
                      "label, then " + std::to_string(expected_cols.size()) +
                      " feature columns)");
  if (header[0] != "attack_tag" || header[1] != "label")
    throw FormatError(origin + ": header must start with attack_tag, label");
  for (std::size_t i = 0; i < expected_cols.size(); ++i)
    if (header[i + 2] != expected_cols[i])
      throw FormatError(origin + ": header column " + std::to_string(i + 3) +
                        " is '" + header[i + 2] + "', expected '" + expected_cols[i] +
                        "'");

  std::vector<FlowSample> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != want)
      throw DataError(origin + ":" + std::to_string(line_no) + ": " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(want));
    FlowSample s;
    s.attack_tag = cells[0];
    if (s.attack_tag.empty())
      throw DataError(origin + ":" + std::to_string(line_no) + ": empty attack_tag");
    if (cells[1] != "0" && cells[1] != "1")
      throw DataError(origin + ":" + std::to_string(line_no) + ": label '" +
                      cells[1] + "' is not 0 or 1");
    s.label = static_cast<std::uint8_t>(cells[1] == "1");
    s.features.resize(kFlowPackets, kPacketFeatures);
    std::size_t k = 2;
    for (int r = 0; r < kFlowPackets; ++r)
      for (int c = 0; c < kPacketFeatures; ++c, ++k) {
        try {
          std::size_t used = 0;
          const float v = std::stof(cells[k], &used);
          if (used != cells[k].size()) throw std::invalid_argument("trailing");
          s.features(r, c) = v;
        } catch (const std::exception&) {
          throw DataError(origin + ":" + std::to_string(line_no) + ": column '" +
                          header[k] + "' value '" + cells[k] + "' is not numeric");
        }
      }
    if (!padding_ok(s.features))
      throw DataError(origin + ":" + std::to_string(line_no) +
                      ": non-contiguous zero padding");
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError(origin + ": header but no data rows");
  return out;
}

std::vector<FlowSample> ingest_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open csv file '" + path + "'");
  return ingest_csv(in, path);
}

void export_csv(const std::vector<FlowSample>& samples, std::ostream& out) {
  out << "attack_tag,label";
  for (const auto& c : csv_feature_columns()) out << ',' << c;
  out << '\n';
  std::ostringstream cell;
  cell.precision(9);
  for (const auto& s : samples) {
    out << s.attack_tag << ',' << static_cast<int>(s.label);
    for (Eigen::Index r = 0; r < s.features.rows(); ++r)
      for (Eigen::Index c2 = 0; c2 < s.features.cols(); ++c2) {
        cell.str("");
        cell << s.features(r, c2);
        out << ',' << cell.str();
      }
    out << '\n';
  }
}

}  // namespace flsim
