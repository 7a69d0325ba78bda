#include <cmath>

#include "sflab/attacks.hpp"
#include "sflab/models.hpp"
#include "sflab/optim.hpp"
#include "sflab/rng.hpp"

namespace sflab {

TrainingDivergence::TrainingDivergence(int epoch, std::int64_t batch, const std::string& what)
    : Error("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
            ": " + what),
      epoch_(epoch),
      batch_(batch) {}

void TrainConfig::validate() const {
  if (epochs <= 0) throw Error("epochs must be positive");
  if (batch_size <= 0) throw Error("batch size must be positive");
  if (!(learning_rate > 0.0f) || !std::isfinite(learning_rate)) throw Error("learning rate must be positive");
  if (adversarial) {
    if (!(adversarial->epsilon >= 0.0f)) throw Error("adversarial epsilon must be >= 0");
    if (adversarial->steps < 1) throw Error("adversarial steps must be >= 1");
  }
}

std::vector<EpochMetrics> train(ModelInstance& model, const Dataset& data, const TrainConfig& config) {
  config.validate();
  data.validate();
  if (data.num_classes > model.spec().num_classes) {
    throw Error("dataset has " + std::to_string(data.num_classes) + " classes but the model only " +
                std::to_string(model.spec().num_classes));
  }
  if (data.empty()) throw Error("train: empty dataset");

  std::vector<std::size_t> trainable;
  std::vector<Shape> shapes;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const auto& p = model.parameters()[i];
    if (p.trainable) {
      trainable.push_back(i);
      shapes.push_back(p.value.shape());
    }
  }
  AdamState adam(AdamConfig{config.learning_rate}, shapes);
  Rng rng(config.seed);

  std::vector<EpochMetrics> history;
  const auto n = data.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = rng.permutation(n);
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    std::int64_t batch_index = 0;
    for (std::int64_t begin = 0; begin < n; begin += config.batch_size, ++batch_index) {
      const auto end = std::min(n, begin + config.batch_size);
      const std::span<const std::int64_t> idx(order.data() + begin, static_cast<std::size_t>(end - begin));
      Tensor images = data.images.gather0(idx);
      std::vector<int> labels;
      for (auto i : idx) labels.push_back(data.labels[static_cast<std::size_t>(i)]);

      try {
        if (config.adversarial && config.adversarial->epsilon > 0.0f) {
          const auto& adv = *config.adversarial;
          images = pgd_pixel_images(model, images, labels, adv.epsilon, adv.eta, adv.steps);
        }
        Tape tape;
        std::vector<Var> leaves;
        auto out = forward(model, tape, tape.constant(images), ForwardMode::kTrain, &leaves);
        Var loss = ops::softmax_xent(out.logits, labels);
        auto grads = backward(tape, loss);

        std::vector<Tensor> grad_values;
        grad_values.reserve(trainable.size());
        for (const auto i : trainable) {
          Tensor g = grads.of(leaves.at(i));
          const auto& frozen = model.parameters()[i].frozen_rows;
          if (!frozen.empty()) {
            const auto per = g.numel() / g.dim(0);
            for (std::size_t r = 0; r < frozen.size(); ++r) {
              if (frozen[r]) std::fill(g.raw() + r * per, g.raw() + (r + 1) * per, 0.0f);
            }
          }
          grad_values.push_back(std::move(g));
        }
        std::vector<Tensor*> params;
        std::vector<const Tensor*> gptrs;
        for (std::size_t k = 0; k < trainable.size(); ++k) {
          params.push_back(&model.parameters()[trainable[k]].value);
          gptrs.push_back(&grad_values[k]);
        }
        adam_step(adam, params, gptrs);

        loss_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(end - begin);
        const auto pred = argmax_rows(out.logits.value());
        for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
      } catch (const NumericalError& e) {
        throw TrainingDivergence(epoch, batch_index, e.what());
      }
    }
    history.push_back(EpochMetrics{epoch, loss_sum / static_cast<double>(n),
                                   static_cast<double>(correct) / static_cast<double>(n)});
  }
  return history;
}

}  // namespace sflab
