#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fsb/data.hpp"
#include "fsb/errors.hpp"

namespace fs = std::filesystem;

namespace fsb {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw LoadError("RTF: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  return out;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& is, const fs::path& path) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw LoadError(path.string() + ": truncated PNM header");
  return tok;
}

int pnm_int(std::istream& is, const fs::path& path) {
  const auto tok = pnm_token(is, path);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::logic_error&) {
    throw LoadError(path.string() + ": bad PNM header field \"" + tok + "\"");
  }
}

}  // namespace

void write_rtf(std::ostream& os, const Shape& shape, std::span<const float> values) {
  if (shape_numel(shape) != values.size()) throw DimensionError("RTF: shape does not match payload");
  os.write("RTF1", 4);
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (auto e : shape) put_u32(os, static_cast<std::uint32_t>(e));
  for (float v : values) put_u32(os, std::bit_cast<std::uint32_t>(v));
}

RtfTensor read_rtf(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RTF1", 4) != 0) throw LoadError("RTF: bad magic");
  RtfTensor t;
  const auto rank = get_u32(is);
  if (rank > 8) throw LoadError("RTF: implausible rank " + std::to_string(rank));
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto e = get_u32(is);
    if (e == 0) throw LoadError("RTF: zero extent");
    t.shape.push_back(e);
  }
  const auto n = shape_numel(t.shape);
  if (n > (std::size_t(1) << 31)) throw LoadError("RTF: payload too large");
  std::vector<unsigned char> raw(n * 4);
  if (n && !is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw LoadError("RTF: truncated payload");
  }
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t u = static_cast<std::uint32_t>(raw[4 * i]) | (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                            (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                            (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
    t.values[i] = std::bit_cast<float>(u);
  }
  return t;
}

Image read_pnm(const fs::path& path) {
  auto in = open_in(path);
  const auto magic = pnm_token(in, path);
  if (magic != "P5" && magic != "P6") throw LoadError(path.string() + ": unsupported PNM type " + magic);
  Image img;
  img.c = magic == "P5" ? 1 : 3;
  img.w = pnm_int(in, path);
  img.h = pnm_int(in, path);
  const int maxval = pnm_int(in, path);
  if (maxval > 65535) throw LoadError(path.string() + ": maxval above 65535");
  const int bytes = maxval < 256 ? 1 : 2;
  const std::size_t plane = static_cast<std::size_t>(img.h) * img.w;
  std::vector<unsigned char> raw(plane * img.c * bytes);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw LoadError(path.string() + ": truncated pixel data");
  }
  img.pixels.resize(plane * img.c);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int ch = 0; ch < img.c; ++ch) {
      const std::size_t k = (p * img.c + ch) * bytes;
      const int v = bytes == 1 ? raw[k] : (raw[k] << 8) | raw[k + 1];
      img.pixels[ch * plane + p] = static_cast<float>(std::min(v, maxval)) / static_cast<float>(maxval);
    }
  }
  return img;
}

void write_pnm(const fs::path& path, const Image& img) {
  if (img.c != 1 && img.c != 3) {
    throw DimensionError("PNM needs 1 or 3 channels, image has " + std::to_string(img.c));
  }
  auto out = open_out(path);
  out << (img.c == 1 ? "P5" : "P6") << '\n' << img.w << ' ' << img.h << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(img.h) * img.w;
  std::vector<unsigned char> raw(plane * img.c);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int ch = 0; ch < img.c; ++ch) {
      const float v = std::clamp(img.pixels[ch * plane + p], 0.0f, 1.0f);
      raw[p * img.c + ch] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw LoadError("failed writing " + path.string());
}

Image read_rtf_image(const fs::path& path) {
  auto in = open_in(path);
  RtfTensor t;
  try {
    t = read_rtf(in);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  if (t.shape.size() != 3) throw LoadError(path.string() + ": expected a rank-3 C x H x W tensor");
  return Image{static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]), static_cast<int>(t.shape[2]),
               std::move(t.values)};
}

void write_rtf_image(const fs::path& path, const Image& img) {
  auto out = open_out(path);
  write_rtf(out, {static_cast<std::size_t>(img.c), static_cast<std::size_t>(img.h), static_cast<std::size_t>(img.w)},
            img.pixels);
  if (!out) throw LoadError("failed writing " + path.string());
}

Image read_image(const fs::path& path) {
  char magic[4] = {};
  {
    auto in = open_in(path);
    in.read(magic, 4);
  }
  if (std::memcmp(magic, "RTF1", 4) == 0) return read_rtf_image(path);
  if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return read_pnm(path);
  throw LoadError(path.string() + ": not a PGM, PPM or RTF file");
}

int Dataset::class_index(const std::string& cls) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].name == cls) return static_cast<int>(i);
  }
  throw ConfigError("dataset \"" + name + "\" has no class \"" + cls + "\"");
}

std::size_t Dataset::sample_count() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.samples.size();
  return n;
}

Dataset load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw LoadError("dataset directory " + root.string() + " does not exist");
  Dataset ds;
  ds.name = root.filename().empty() ? root.parent_path().filename().string() : root.filename().string();
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    ClassRecord rec{dir.filename().string(), {}};
    for (const auto& f : files) rec.samples.push_back(read_image(f));
    if (rec.samples.empty()) throw LoadError("class directory " + dir.string() + " has no samples");
    ds.classes.push_back(std::move(rec));
  }
  if (ds.classes.empty()) throw LoadError("dataset directory " + root.string() + " has no class subdirectories");
  return ds;
}

void save_dataset(const fs::path& root, const Dataset& ds, ImageFormat format) {
  fs::create_directories(root);
  for (const auto& cls : ds.classes) {
    const auto dir = root / cls.name;
    fs::create_directories(dir);
    const int width = std::max<int>(4, static_cast<int>(std::to_string(cls.samples.size()).size()));
    for (std::size_t i = 0; i < cls.samples.size(); ++i) {
      std::ostringstream name;
      name.width(width);
      name.fill('0');
      name << i;
      const auto& img = cls.samples[i];
      if (format == ImageFormat::rtf) {
        write_rtf_image(dir / (name.str() + ".rtf"), img);
      } else {
        write_pnm(dir / (name.str() + (img.c == 1 ? ".pgm" : ".ppm")), img);
      }
    }
  }
}

}  // namespace fsb
