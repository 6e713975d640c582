#include "zfs/protonet.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace zfs::zsl {

namespace {

nn::Tensor<float> attribute_rows(const nn::Tensor<float>& attributes,
                                 const std::vector<int64_t>& classes) {
  nn::Tensor<float> out({static_cast<int64_t>(classes.size()), attributes.dim(1)});
  for (size_t i = 0; i < classes.size(); ++i) {
    ZFS_CHECK(classes[i] >= 0 && classes[i] < attributes.dim(0),
              "attribute row missing for class " + std::to_string(classes[i]));
    for (int64_t j = 0; j < attributes.dim(1); ++j)
      out.at2(static_cast<int64_t>(i), j) = attributes.at2(classes[i], j);
  }
  return out;
}

nn::Tensor<float> embed_eval(const Embedder& emb, const nn::Tensor<float>& rows) {
  // Leaf inputs without gradients build no backward graph.
  return emb.forward(nn::constant(rows)).value();
}

}  // namespace

nn::Tensor<float> ProtoModel::standardized(const nn::Tensor<float>& x) const {
  if (feat_mean.empty()) return x;
  ZFS_CHECK(x.dim(1) == feat_dim, "feature width does not match the fitted standardizer");
  nn::Tensor<float> out = x;
  for (int64_t i = 0; i < x.dim(0); ++i)
    for (int64_t j = 0; j < feat_dim; ++j)
      out.at2(i, j) = (x.at2(i, j) - feat_mean[j]) / feat_std[j];
  return out;
}

ProtoModel fit_protonet(const nn::Tensor<float>& features,
                        const std::vector<int64_t>& labels_global,
                        const nn::Tensor<float>& attributes,
                        const std::vector<int64_t>& train_classes, const ProtoConfig& cfg) {
  ZFS_CHECK(train_classes.size() >= 2,
            "prototypical fitting is degenerate with a single train class");
  ZFS_CHECK(features.dim(0) == static_cast<int64_t>(labels_global.size()),
            "feature/label count mismatch");

  std::vector<int64_t> classes = train_classes;
  std::sort(classes.begin(), classes.end());
  std::vector<int64_t> id_map(attributes.dim(0), -1);
  for (size_t i = 0; i < classes.size(); ++i) id_map[classes[i]] = static_cast<int64_t>(i);

  ProtoModel model;
  model.feat_dim = features.dim(1);
  model.attr_dim = attributes.dim(1);
  model.embed_dim = cfg.embed_dim;
  model.train_classes = classes;
  nn::Rng rng(cfg.seed);
  nn::Rng init = rng.fork("protonet-init");
  nn::Rng order_rng = rng.fork("protonet-order");
  model.img_emb = Embedder(model.params, "img", model.feat_dim, cfg.hidden, cfg.embed_dim,
                           cfg.img_hidden_layers, init);
  model.attr_emb = Embedder(model.params, "attr", model.attr_dim, cfg.hidden, cfg.embed_dim,
                            cfg.attr_hidden_layers, init);
  if (cfg.standardize) {
    model.feat_mean = nn::Tensor<float>({model.feat_dim});
    model.feat_std = nn::Tensor<float>({model.feat_dim});
    for (int64_t j = 0; j < model.feat_dim; ++j) {
      double mu = 0, var = 0;
      for (int64_t i = 0; i < features.dim(0); ++i) mu += features.at2(i, j);
      mu /= features.dim(0);
      for (int64_t i = 0; i < features.dim(0); ++i) {
        const double df = features.at2(i, j) - mu;
        var += df * df;
      }
      model.feat_mean[j] = static_cast<float>(mu);
      model.feat_std[j] = static_cast<float>(std::sqrt(var / features.dim(0) + 1e-6));
    }
  }
  nn::Tensor<float> feats = model.standardized(features);

  nn::Tensor<float> attrs_train = attribute_rows(attributes, classes);
  const int64_t n = feats.dim(0), d = feats.dim(1);
  std::vector<int64_t> order(n);
  for (int64_t i = 0; i < n; ++i) order[i] = i;
  size_t pos = order.size();

  nn::Adam<float> opt(cfg.lr);
  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<int64_t> batch_rows;
    while (static_cast<int64_t>(batch_rows.size()) < cfg.batch) {
      if (pos >= order.size()) {
        order_rng.shuffle(order.begin(), order.end());
        pos = 0;
      }
      batch_rows.push_back(order[pos++]);
    }
    nn::Tensor<float> batch({static_cast<int64_t>(batch_rows.size()), d});
    std::vector<int64_t> ids(batch_rows.size());
    for (size_t i = 0; i < batch_rows.size(); ++i) {
      std::copy(feats.data() + batch_rows[i] * d, feats.data() + (batch_rows[i] + 1) * d,
                batch.data() + static_cast<int64_t>(i) * d);
      ids[i] = id_map[labels_global[batch_rows[i]]];
      ZFS_CHECK(ids[i] >= 0, "feature labelled outside the train classes");
    }
    model.params.zero_grad();
    nn::Var<float> q = model.img_emb.forward(nn::constant(batch));
    nn::Var<float> protos = model.attr_emb.forward(nn::constant(attrs_train));
    nn::Var<float> dist = nn::pairwise_sqdist(q, protos);
    nn::Var<float> loss = nn::softmax_cross_entropy(nn::mul_scalar(dist, -1.f), ids);
    ZFS_CHECK(std::isfinite(loss.value()[0]), "non-finite prototypical loss");
    nn::backward(loss);
    opt.step(model.params);
  }
  return model;
}

namespace {

/// argmin over squared distances, ties to the lowest class index (classes
/// are scanned in ascending order with a strict comparison).
std::vector<int64_t> nearest_prototype(const nn::Tensor<float>& emb,
                                       const nn::Tensor<float>& protos,
                                       const std::vector<int64_t>& classes) {
  const int64_t n = emb.dim(0), c = protos.dim(0), d = emb.dim(1);
  std::vector<int64_t> pred(n);
  for (int64_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int64_t best_class = -1;
    for (int64_t j = 0; j < c; ++j) {
      double s = 0;
      for (int64_t k = 0; k < d; ++k) {
        double diff = static_cast<double>(emb.at2(i, k)) - protos.at2(j, k);
        s += diff * diff;
      }
      if (s < best) {
        best = s;
        best_class = classes[j];
      }
    }
    pred[i] = best_class;
  }
  return pred;
}

ZslResult score_predictions(const std::vector<int64_t>& pred,
                            const std::vector<int64_t>& labels,
                            const std::vector<int64_t>& classes) {
  ZslResult r;
  r.test_classes = classes;
  r.predictions = pred;
  r.per_class.assign(classes.size(), 0);
  std::vector<int64_t> count(classes.size(), 0);
  std::vector<int64_t> pos(1 + *std::max_element(classes.begin(), classes.end()), -1);
  for (size_t i = 0; i < classes.size(); ++i) pos[classes[i]] = static_cast<int64_t>(i);
  int64_t correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const int64_t cls = labels[i];
    ZFS_CHECK(cls < static_cast<int64_t>(pos.size()) && pos[cls] >= 0,
              "evaluated image labelled outside the unseen classes");
    ++count[pos[cls]];
    if (pred[i] == cls) {
      ++correct;
      r.per_class[pos[cls]] += 1;
    }
  }
  for (size_t i = 0; i < classes.size(); ++i)
    if (count[i] > 0) r.per_class[i] /= static_cast<double>(count[i]);
  r.top1 = pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size());
  return r;
}

}  // namespace

ZslResult predict_zsl(const ProtoModel& model, const nn::Tensor<float>& features,
                      const std::vector<int64_t>& labels_global,
                      const nn::Tensor<float>& attributes,
                      const std::vector<int64_t>& test_classes) {
  std::vector<int64_t> classes = test_classes;
  std::sort(classes.begin(), classes.end());
  {
    std::set<int64_t> train(model.train_classes.begin(), model.train_classes.end());
    for (int64_t c : classes)
      ZFS_CHECK(!train.count(c), "unseen class " + std::to_string(c) + " overlaps train classes");
  }
  nn::Tensor<float> protos = embed_eval(model.attr_emb, attribute_rows(attributes, classes));
  nn::Tensor<float> emb = embed_eval(model.img_emb, model.standardized(features));
  return score_predictions(nearest_prototype(emb, protos, classes), labels_global, classes);
}

nn::Tensor<float> class_probabilities(const ProtoModel& model, const nn::Tensor<float>& rows,
                                      const nn::Tensor<float>& attributes,
                                      const std::vector<int64_t>& classes) {
  nn::Tensor<float> protos = embed_eval(model.attr_emb, attribute_rows(attributes, classes));
  nn::Tensor<float> emb = embed_eval(model.img_emb, model.standardized(rows));
  const int64_t n = emb.dim(0), c = protos.dim(0), d = emb.dim(1);
  nn::Tensor<float> probs({n, c});
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> logit(c);
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < c; ++j) {
      double s = 0;
      for (int64_t k = 0; k < d; ++k) {
        double diff = static_cast<double>(emb.at2(i, k)) - protos.at2(j, k);
        s += diff * diff;
      }
      logit[j] = -s;
      mx = std::max(mx, logit[j]);
    }
    double z = 0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(logit[j] - mx);
    for (int64_t j = 0; j < c; ++j)
      probs.at2(i, j) = static_cast<float>(std::exp(logit[j] - mx) / z);
  }
  return probs;
}

ZslResult predict_zsl_local(const ProtoModel& model, const nn::Tensor<float>& locals,
                            const std::vector<int64_t>& labels_global,
                            const nn::Tensor<float>& attributes,
                            const std::vector<int64_t>& test_classes, AggregateMode mode) {
  std::vector<int64_t> classes = test_classes;
  std::sort(classes.begin(), classes.end());
  const int64_t n = locals.dim(0), c = locals.dim(1), m = locals.dim(2) * locals.dim(3);

  if (mode == AggregateMode::kAverageRepresentations) {
    nn::Tensor<float> mean({n, c});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < c; ++ch) {
        double acc = 0;
        const float* src = locals.data() + (i * c + ch) * m;
        for (int64_t j = 0; j < m; ++j) acc += src[j];
        mean.at2(i, ch) = static_cast<float>(acc / m);
      }
    return predict_zsl(model, mean, labels_global, attributes, classes);
  }

  nn::Tensor<float> protos = embed_eval(model.attr_emb, attribute_rows(attributes, classes));
  std::vector<int64_t> pred(n);
  for (int64_t i = 0; i < n; ++i) {
    nn::Tensor<float> rows = pretrain::local_cell_rows(locals, i);
    nn::Tensor<float> probs = class_probabilities(model, rows, attributes, classes);
    double best = -1;
    int64_t best_class = -1;
    for (size_t j = 0; j < classes.size(); ++j) {
      double acc = 0;
      for (int64_t cell = 0; cell < m; ++cell) acc += probs.at2(cell, static_cast<int64_t>(j));
      acc /= static_cast<double>(m);
      if (acc > best) {
        best = acc;
        best_class = classes[j];
      }
    }
    pred[i] = best_class;
  }
  return score_predictions(pred, labels_global, classes);
}

ZslResult zsl_eval(enc::Encoder<float>& frozen_encoder, const data::DatasetBundle& bundle,
                   const EvalOptions& opts) {
  ZFS_CHECK(!frozen_encoder.trainable(),
            "ZFS protocol violation: encoder must be frozen for prototypical evaluation");
  const auto train_idx = bundle.indices_of_classes(bundle.split.train_classes);
  const auto test_idx = bundle.indices_of_classes(bundle.split.test_classes);
  pretrain::FeatureSet ftrain = pretrain::extract_features(frozen_encoder, bundle, train_idx,
                                                           opts.resize_to, opts.tap);
  pretrain::FeatureSet ftest = pretrain::extract_features(frozen_encoder, bundle, test_idx,
                                                          opts.resize_to, opts.tap);

  if (opts.kind == FeatureKind::kGlobal) {
    ProtoModel model = fit_protonet(ftrain.global, ftrain.labels, bundle.attributes,
                                    bundle.split.train_classes, opts.proto);
    return predict_zsl(model, ftest.global, ftest.labels, bundle.attributes,
                       bundle.split.test_classes);
  }

  if (opts.kind == FeatureKind::kAverageRepresentations) {
    nn::Tensor<float> mtrain = pretrain::local_mean_features(ftrain);
    ProtoModel model = fit_protonet(mtrain, ftrain.labels, bundle.attributes,
                                    bundle.split.train_classes, opts.proto);
    return predict_zsl_local(model, ftest.local, ftest.labels, bundle.attributes,
                             bundle.split.test_classes,
                             AggregateMode::kAverageRepresentations);
  }

  // kAveragePredictions: each location is a training sample with its image's
  // class label.
  const int64_t n = ftrain.local.dim(0), c = ftrain.local.dim(1);
  const int64_t m = ftrain.local.dim(2) * ftrain.local.dim(3);
  nn::Tensor<float> rows({n * m, c});
  std::vector<int64_t> row_labels(n * m);
  for (int64_t i = 0; i < n; ++i) {
    nn::Tensor<float> r = pretrain::local_cell_rows(ftrain.local, i);
    std::copy(r.data(), r.data() + r.numel(), rows.data() + i * m * c);
    for (int64_t cell = 0; cell < m; ++cell) row_labels[i * m + cell] = ftrain.labels[i];
  }
  ProtoModel model =
      fit_protonet(rows, row_labels, bundle.attributes, bundle.split.train_classes, opts.proto);
  return predict_zsl_local(model, ftest.local, ftest.labels, bundle.attributes,
                           bundle.split.test_classes, AggregateMode::kAveragePredictions);
}

}  // namespace zfs::zsl
