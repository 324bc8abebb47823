#include "rga/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace rga {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic{'R', 'G', 'A', 'W'};

template <class U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  template <class U>
  U get(const char* what) {
    U v;
    read(reinterpret_cast<char*>(&v), sizeof(U), what);
    return v;
  }

  void read(char* dst, std::size_t n, const char* what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw CheckpointError("corrupt checkpoint '" + path_ + "': truncated while reading " + what);
    }
  }

  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }
  const std::string& path() const { return path_; }

 private:
  std::istream& is_;
  std::string path_;
};

bool is_running_stat(const std::string& name) {
  return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

}  // namespace

CheckpointMismatch::CheckpointMismatch(std::string tensor, const std::string& detail)
    : CheckpointError("checkpoint does not match the configured model at tensor '" + tensor + "': " + detail),
      tensor_(std::move(tensor)) {}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet<float>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, e] : params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw CheckpointError("tensor name too long: " + name);
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(e.value.rank()));
    for (auto d : e.value.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(e.value.ptr()), static_cast<std::streamsize>(e.value.size() * sizeof(float)));
  }
  if (!os) throw CheckpointError("write to '" + path.string() + "' failed");
}

ParameterSet<float> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint '" + path.string() + "' not found or unreadable");
  Reader r(is, path.string());
  std::array<char, 4> magic{};
  r.read(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw CheckpointError("corrupt checkpoint '" + path.string() + "': bad magic bytes");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint '" + path.string() + "' has unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  ParameterSet<float> ps;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = r.get<std::uint16_t>("name length");
    std::string name(len, '\0');
    r.read(name.data(), len, "tensor name");
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape;
    std::uint64_t n = 1;
    for (int d = 0; d < rank; ++d) {
      const auto extent = r.get<std::uint32_t>("dims");
      if (extent == 0) throw CheckpointError("corrupt checkpoint '" + path.string() + "': zero extent in " + name);
      shape.push_back(extent);
      n *= extent;
      if (n > (std::uint64_t{1} << 32)) throw CheckpointError("corrupt checkpoint '" + path.string() + "': " + name + " too large");
    }
    std::vector<float> data(n);
    r.read(reinterpret_cast<char*>(data.data()), n * sizeof(float), "tensor values");
    if (ps.contains(name)) throw CheckpointError("corrupt checkpoint '" + path.string() + "': duplicate tensor " + name);
    ps.add(name, Tensor<float>(std::move(shape), std::move(data)), !is_running_stat(name));
  }
  if (!r.at_end()) throw CheckpointError("corrupt checkpoint '" + path.string() + "': trailing bytes");
  return ps;
}

void load_checkpoint(const std::filesystem::path& path, ParameterSet<float>& params) {
  ParameterSet<float> file = read_checkpoint(path);
  auto fit = file.begin();
  auto pit = params.begin();
  for (; fit != file.end() && pit != params.end(); ++fit, ++pit) {
    if (fit->first != pit->first) {
      const bool file_first = fit->first < pit->first;
      throw CheckpointMismatch(file_first ? fit->first : pit->first,
                               file_first ? "present in the file but not in the model" : "missing from the file");
    }
    if (fit->second.value.shape() != pit->second.value.shape()) {
      throw CheckpointMismatch(fit->first, "file shape " + shape_str(fit->second.value.shape()) + " vs model shape " +
                                               shape_str(pit->second.value.shape()));
    }
  }
  if (fit != file.end()) throw CheckpointMismatch(fit->first, "present in the file but not in the model");
  if (pit != params.end()) throw CheckpointMismatch(pit->first, "missing from the file");
  for (auto& [name, e] : params) e.value = file.value(name);
}

}  // namespace rga
