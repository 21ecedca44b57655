// Copyright 2026 The foaenc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal RIFF/WAVE I/O. Writes 32-bit IEEE float; reads float32 and
// 16/24/32-bit integer PCM (plain or WAVE_FORMAT_EXTENSIBLE).

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "foaenc/common.hpp"

namespace foaenc {

struct WavData {
  ChannelBuffers channels;
  double sample_rate = 0.0;

  std::size_t frames() const {
    return channels.empty() ? 0 : channels.front().size();
  }
};

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline void write_wav(const std::string& path, const ChannelBuffers& channels,
                      double sample_rate) {
  if (channels.empty()) throw Error("write_wav: no channels");
  const std::size_t frames = channels.front().size();
  for (const auto& ch : channels) {
    if (ch.size() != frames) throw Error("write_wav: channel lengths differ");
  }
  const auto n_ch = static_cast<std::uint16_t>(channels.size());
  const auto rate = static_cast<std::uint32_t>(sample_rate);
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(frames * channels.size() * 4);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os.write("RIFF", 4);
  detail::put_le(os, static_cast<std::uint32_t>(4 + 26 + 12 + 8 + data_bytes));
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::put_le(os, std::uint32_t{18});
  detail::put_u16(os, 3);  // WAVE_FORMAT_IEEE_FLOAT
  detail::put_u16(os, n_ch);
  detail::put_le(os, rate);
  detail::put_le(os, rate * n_ch * 4u);
  detail::put_u16(os, static_cast<std::uint16_t>(n_ch * 4));
  detail::put_u16(os, 32);
  detail::put_u16(os, 0);  // cbSize
  os.write("fact", 4);
  detail::put_le(os, std::uint32_t{4});
  detail::put_le(os, static_cast<std::uint32_t>(frames));
  os.write("data", 4);
  detail::put_le(os, data_bytes);
  for (std::size_t i = 0; i < frames; ++i) {
    for (const auto& ch : channels) {
      detail::put_le(os, static_cast<float>(ch[i]));
    }
  }
  if (!os) throw Error("write failed: " + path);
}

inline WavData read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(path + " is not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, n_ch = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0) {
      throw Error(path + ": truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      const unsigned char* f = bytes.data() + body;
      format = detail::get_u16(f);
      n_ch = detail::get_u16(f + 2);
      rate = detail::get_u32(f + 4);
      bits = detail::get_u16(f + 14);
      if (format == 0xFFFE && size >= 26) format = detail::get_u16(f + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!data || n_ch == 0) throw Error(path + ": missing fmt or data chunk");
  const std::size_t width = bits / 8;
  if (!((format == 3 && bits == 32) ||
        (format == 1 && (bits == 16 || bits == 24 || bits == 32)))) {
    throw Error(path + ": unsupported sample format " +
                std::to_string(format) + "/" + std::to_string(bits));
  }
  const std::size_t frames = data_size / (width * n_ch);
  WavData out{ChannelBuffers(n_ch, std::vector<double>(frames)),
              static_cast<double>(rate)};
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < n_ch; ++c) {
      const unsigned char* p = data + (i * n_ch + c) * width;
      double v = 0.0;
      if (format == 3) {
        v = std::bit_cast<float>(detail::get_u32(p));
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(detail::get_u16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s -= 0x1000000;
        v = s / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(detail::get_u32(p)) / 2147483648.0;
      }
      out.channels[c][i] = v;
    }
  }
  return out;
}

}  // namespace foaenc
