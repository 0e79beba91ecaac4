// src/codebook.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "maskbook/codebook.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace maskbook {

void validate(const Magbook& book) {
  require(book.size() >= 2, "Magbook: need at least 2 atoms");
  require(all_finite(book.atoms.data(), book.atoms.size()), "Magbook: non-finite atom");
  const double first = book.atoms.front();
  bool varied = false;
  for (double atom : book.atoms)
    if (atom != first) varied = true;
  require(varied, "Magbook: atoms must not all be equal");
}

void validate(const Phasebook& book) {
  require(book.size() >= 2, "Phasebook: need at least 2 atoms");
  require(all_finite(book.atoms.data(), book.atoms.size()), "Phasebook: non-finite atom");
  for (int i = 0; i < book.size(); ++i)
    for (int j = i + 1; j < book.size(); ++j)
      require(std::abs(wrap_angle(book.atoms[i] - book.atoms[j])) > 1e-12,
              "Phasebook: atoms must be distinct modulo 2*pi");
}

void validate(const Combook& book) {
  require(book.size() >= 2, "Combook: need at least 2 atoms");
  require(all_finite(book.atoms.data(), book.atoms.size()), "Combook: non-finite atom");
  for (int i = 0; i < book.size(); ++i)
    for (int j = i + 1; j < book.size(); ++j)
      require(std::abs(book.atoms[i] - book.atoms[j]) > 0.0, "Combook: atoms must be distinct");
}

Magbook uniform_magbook(int size) {
  require(size >= 2, "uniform_magbook: size must be >= 2");
  Magbook book;
  book.atoms.resize(size);
  for (int i = 0; i < size; ++i) book.atoms[i] = static_cast<double>(i);
  return book;
}

void validate_simplex(const MaskProbabilities& probs, double tolerance) {
  for (int t = 0; t < probs.frames; ++t) {
    for (int f = 0; f < probs.bins; ++f) {
      const double* p = probs.bin(t, f);
      double sum = 0.0;
      for (int k = 0; k < probs.depth; ++k) {
        require(p[k] >= 0.0, "MaskProbabilities: negative probability");
        sum += p[k];
      }
      require(std::abs(sum - 1.0) <= tolerance, "MaskProbabilities: bin does not sum to 1");
    }
  }
}

namespace {

void require_match(const MaskProbabilities& probs, int codebook_size, const char* what) {
  require(probs.depth == codebook_size,
          std::string("inference: probability depth does not match codebook size (") + what + ")");
}

int argmax_index(const double* p, int k) {
  int best = 0;
  for (int i = 1; i < k; ++i)
    if (p[i] > p[best]) best = i;  // ties keep the lowest index
  return best;
}

template <typename T, typename Book>
Mat<T> map_bins(const MaskProbabilities& probs, const Book& book,
                const std::function<T(const double*, const Book&)>& fn) {
  Mat<T> out(probs.frames, probs.bins);
  for (int t = 0; t < probs.frames; ++t)
    for (int f = 0; f < probs.bins; ++f) out(t, f) = fn(probs.bin(t, f), book);
  return out;
}

}  // namespace

RealMat infer_argmax(const MaskProbabilities& probs, const Magbook& book) {
  require_match(probs, book.size(), "magbook");
  return map_bins<double, Magbook>(probs, book, [](const double* p, const Magbook& b) {
    return b.atoms[argmax_index(p, b.size())];
  });
}

RealMat infer_argmax(const MaskProbabilities& probs, const Phasebook& book) {
  require_match(probs, book.size(), "phasebook");
  return map_bins<double, Phasebook>(probs, book, [](const double* p, const Phasebook& b) {
    return b.atoms[argmax_index(p, b.size())];
  });
}

CplxMat infer_argmax(const MaskProbabilities& probs, const Combook& book) {
  require_match(probs, book.size(), "combook");
  return map_bins<cdouble, Combook>(probs, book, [](const double* p, const Combook& b) {
    return b.atoms[argmax_index(p, b.size())];
  });
}

namespace {

template <typename T, typename Book>
Mat<T> sample_bins(const MaskProbabilities& probs, const Book& book, uint64_t seed) {
  validate_simplex(probs);
  Rng rng(seed);
  Mat<T> out(probs.frames, probs.bins);
  for (int t = 0; t < probs.frames; ++t)
    for (int f = 0; f < probs.bins; ++f)
      out(t, f) = book.atoms[sample_categorical(probs.bin(t, f), probs.depth, rng)];
  return out;
}

}  // namespace

RealMat infer_sample(const MaskProbabilities& probs, const Magbook& book, uint64_t seed) {
  require_match(probs, book.size(), "magbook");
  return sample_bins<double>(probs, book, seed);
}

RealMat infer_sample(const MaskProbabilities& probs, const Phasebook& book, uint64_t seed) {
  require_match(probs, book.size(), "phasebook");
  return sample_bins<double>(probs, book, seed);
}

CplxMat infer_sample(const MaskProbabilities& probs, const Combook& book, uint64_t seed) {
  require_match(probs, book.size(), "combook");
  return sample_bins<cdouble>(probs, book, seed);
}

RealMat infer_interpolate(const MaskProbabilities& probs, const Magbook& book) {
  require_match(probs, book.size(), "magbook");
  return map_bins<double, Magbook>(probs, book, [](const double* p, const Magbook& b) {
    double value = 0.0;
    for (int i = 0; i < b.size(); ++i) value += p[i] * b.atoms[i];
    return value;
  });
}

CplxMat infer_interpolate(const MaskProbabilities& probs, const Combook& book) {
  require_match(probs, book.size(), "combook");
  return map_bins<cdouble, Combook>(probs, book, [](const double* p, const Combook& b) {
    cdouble value(0.0, 0.0);
    for (int i = 0; i < b.size(); ++i) value += p[i] * b.atoms[i];
    return value;
  });
}

PhaseInterpolation infer_interpolate(const MaskProbabilities& probs, const Phasebook& book) {
  require_match(probs, book.size(), "phasebook");
  PhaseInterpolation result;
  result.angles = RealMat(probs.frames, probs.bins);
  result.degenerate.assign(static_cast<size_t>(probs.frames) * probs.bins, 0);

  std::vector<double> cos_atoms(book.size()), sin_atoms(book.size());
  for (int j = 0; j < book.size(); ++j) {
    cos_atoms[j] = std::cos(book.atoms[j]);
    sin_atoms[j] = std::sin(book.atoms[j]);
  }

  for (int t = 0; t < probs.frames; ++t) {
    for (int f = 0; f < probs.bins; ++f) {
      const double* p = probs.bin(t, f);
      double re = 0.0, im = 0.0;
      for (int j = 0; j < book.size(); ++j) {
        re += p[j] * cos_atoms[j];
        im += p[j] * sin_atoms[j];
      }
      if (std::sqrt(re * re + im * im) < kPhaseInterpDegenerate) {
        // Antipodal cancellation: leave the mixture phase untouched.
        result.angles(t, f) = 0.0;
        result.degenerate[static_cast<size_t>(t) * probs.bins + f] = 1;
        ++result.degenerate_count;
      } else {
        result.angles(t, f) = std::atan2(im, re);
      }
    }
  }
  return result;
}

CplxMat compose_complex_mask(const RealMat& magnitudes, const RealMat& phases) {
  require(magnitudes.same_shape(phases), "compose_complex_mask: shape mismatch");
  CplxMat mask(magnitudes.rows, magnitudes.cols);
  for (size_t i = 0; i < mask.size(); ++i)
    mask.data[i] = polar_md(magnitudes.data[i], phases.data[i]);
  return mask;
}

// --- serialization ----------------------------------------------------------

namespace {

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  require(out.good(), "cannot open for writing: " + path);
  for (const auto& line : lines) out << line << '\n';
  require(out.good(), "write failed: " + path);
}

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open codebook file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

void save_codebook(const std::string& path, const Magbook& book) {
  std::vector<std::string> lines;
  for (double atom : book.atoms) lines.push_back(format_double(atom));
  write_lines(path, lines);
}

void save_codebook(const std::string& path, const Phasebook& book) {
  std::vector<std::string> lines;
  for (double atom : book.atoms) lines.push_back(format_double(atom));
  write_lines(path, lines);
}

void save_codebook(const std::string& path, const Combook& book) {
  std::vector<std::string> lines;
  for (const cdouble& atom : book.atoms)
    lines.push_back(format_double(atom.real()) + " " + format_double(atom.imag()));
  write_lines(path, lines);
}

Magbook load_magbook(const std::string& path) {
  Magbook book;
  for (const auto& line : read_lines(path)) {
    size_t consumed = 0;
    book.atoms.push_back(std::stod(line, &consumed));
  }
  require(!book.atoms.empty(), "empty codebook file: " + path);
  return book;
}

Phasebook load_phasebook(const std::string& path) {
  Phasebook book;
  for (const auto& line : read_lines(path)) book.atoms.push_back(std::stod(line));
  require(!book.atoms.empty(), "empty codebook file: " + path);
  return book;
}

Combook load_combook(const std::string& path) {
  Combook book;
  for (const auto& line : read_lines(path)) {
    std::istringstream stream(line);
    double re = 0.0, im = 0.0;
    require(static_cast<bool>(stream >> re >> im), "bad combook line: " + line);
    book.atoms.emplace_back(re, im);
  }
  require(!book.atoms.empty(), "empty codebook file: " + path);
  return book;
}

}  // namespace maskbook
