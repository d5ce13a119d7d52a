// Shared parser fixtures: malformed inputs with their expected positions and a
// random expression generator with a direct interpreter.
#pragma once

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

namespace fixture {

struct Malformed {
  std::string text;
  int line, col;
};

inline std::vector<Malformed> malformed() {
  const std::string head = "system s\ndims n=1 m=1 p=0 r=1\n";
  const std::string tail = "const Lf=1 Lsigma=0 K=1\n";
  return {
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = -x1 +\n" + tail, 5, 18},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = -x1 + (u1\n" + tail, 5, 22},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = x2\n" + tail, 5, 13},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = foo(x1)\n" + tail, 5, 13},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = pow(x1, 1.5)\n" + tail, 5, 22},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = x1 $ 2\n" + tail, 5, 16},
      {head + "domain x1 in [1, -1]\n", 3, 14},
      {head + "domain x2 in [-1, 1]\n", 3, 8},
      {head + "domian x1 in [-1, 1]\n", 3, 1},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = -x1\ndiff sigma[1][1] = u1\n" + tail, 6, 20},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = -x1\ndiff sigma[1][2] = x1\n" + tail, 6, 15},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = -x1\nconst Lf=1 Lsigma=0 K=0\n", 6, 23},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = -x1\nconst Lf=1 Lsigma=0 K=1 Q=2\n", 6, 25},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = -x1\nconst Lf=1 Lsigma=0\n", 6, 20},
      {"system s\ndomain x1 in [-1, 1]\n", 2, 1},
      {"system s\ndims n=0 m=1 p=0 r=1\n", 2, 8},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\n" + tail, 5, 1},
      {head + "domain x1 in [-1, 1]\ninput u1 in [0,0]\ndrift x1' = -x1\ncert P=[1, 2] kappa=1\n" + tail, 6, 8},
      {"network\nnode a file=a.sys eps=1\ntau=1\n", 2, 24},
      {"network\nfoo bar\ntau=1\n", 2, 1},
      {"network\ntau=-1\n", 2, 5},
  };
}


struct Tree {
  char op;      // 'n' number, 'x','u','w' variables, '~' negate, + - * /, 's','c','t','e' functions, '^' pow
  double value; // number
  int index;    // variable index (0-based) or pow exponent
  std::vector<Tree> kids;
};

inline double interpret(const Tree &t, const double *x, const double *u, const double *w) {
  switch (t.op) {
  case 'n': return t.value;
  case 'x': return x[t.index];
  case 'u': return u[t.index];
  case 'w': return w[t.index];
  case '~': return -interpret(t.kids[0], x, u, w);
  case '+': return interpret(t.kids[0], x, u, w) + interpret(t.kids[1], x, u, w);
  case '-': return interpret(t.kids[0], x, u, w) - interpret(t.kids[1], x, u, w);
  case '*': return interpret(t.kids[0], x, u, w) * interpret(t.kids[1], x, u, w);
  case '/': return interpret(t.kids[0], x, u, w) / interpret(t.kids[1], x, u, w);
  case 's': return std::sin(interpret(t.kids[0], x, u, w));
  case 'c': return std::cos(interpret(t.kids[0], x, u, w));
  case 't': return std::tanh(interpret(t.kids[0], x, u, w));
  case 'e': return std::exp(interpret(t.kids[0], x, u, w));
  case '^': {
    double b = interpret(t.kids[0], x, u, w), r = 1.0;
    for (int i = 0; i < t.index; ++i) r *= b;
    return r;
  }
  }
  return NAN;
}

inline std::string text_of(const Tree &t) {
  char buf[40];
  switch (t.op) {
  case 'n': std::snprintf(buf, sizeof buf, "%.17g", t.value); return buf;
  case 'x':
  case 'u':
  case 'w': return std::string(1, t.op) + std::to_string(t.index + 1);
  case '~': return "-(" + text_of(t.kids[0]) + ")";
  case '+':
  case '-':
  case '*':
  case '/': return "(" + text_of(t.kids[0]) + ") " + t.op + " (" + text_of(t.kids[1]) + ")";
  case 's': return "sin(" + text_of(t.kids[0]) + ")";
  case 'c': return "cos(" + text_of(t.kids[0]) + ")";
  case 't': return "tanh(" + text_of(t.kids[0]) + ")";
  case 'e': return "exp(" + text_of(t.kids[0]) + ")";
  case '^': return "pow(" + text_of(t.kids[0]) + ", " + std::to_string(t.index) + ")";
  }
  return "?";
}

inline Tree random_tree(std::mt19937_64 &rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth > 0 ? 13 : 3);
  std::uniform_int_distribution<int> var(0, 1);
  int k = pick(rng);
  if (k == 0) return {'n', std::uniform_real_distribution<double>(0.0, 5.0)(rng), 0, {}};
  if (k == 1) return {'x', 0, var(rng), {}};
  if (k == 2) return {'u', 0, var(rng), {}};
  if (k == 3) return {'w', 0, 0, {}};
  static const char ops[] = "~+-*/sctee^+*";
  char op = ops[k - 4];
  Tree t{op, 0, 0, {}};
  t.kids.push_back(random_tree(rng, depth - 1));
  if (op == '+' || op == '-' || op == '*' || op == '/') t.kids.push_back(random_tree(rng, depth - 1));
  if (op == 'e') t.kids[0] = Tree{'t', 0, 0, {t.kids[0]}};
  if (op == '/') t.kids[1] = Tree{'+', 0, 0, {Tree{'n', 2.0, 0, {}}, Tree{'s', 0, 0, {t.kids[1]}}}};
  if (op == '^') t.index = std::uniform_int_distribution<int>(0, 4)(rng);
  return t;
}

} // namespace fixture
