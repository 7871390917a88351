use fedcompress_core::compression::{
    decode, encode, snap, wc_loss, ClusteredModel, Codebook, HEADER_LEN, LAYER_FRAMING_LEN,
};
use fedcompress_core::data::{self, PartitionSpec};
use fedcompress_core::fed::{client_update, self_compress, TrainConfig};
use fedcompress_core::nn::{accuracy, predict};
use fedcompress_core::seed::{self, Stream};
use fedcompress_core::{Error, ModelWeights};
use proptest::prelude::*;

fn client_fixture() -> (ModelWeights, data::ClientState) {
    let ds = data::make_blobs(4, 6, 400, 0.8, 5).unwrap();
    let clients = data::partition(
        &ds,
        &PartitionSpec {
            clients: 2,
            size_cv: 0.25,
            label_alpha: 1.0,
            unlabeled_fraction: 0.2,
            seed: 6,
        },
    )
    .unwrap();
    let model = ModelWeights::init_mlp(&[6, 12, 4], &mut seed::rng_from(7)).unwrap();
    (model, clients.into_iter().next().unwrap())
}

#[test]
fn clustering_penalty_does_not_grow_after_warm_up() {
    let (model, client) = client_fixture();
    let cfg = TrainConfig {
        epochs_client: 8,
        ..TrainConfig::default()
    };
    // Start from a model already fitted to this client's data so that the
    // cross-entropy term is near-stationary and the clustering term dominates.
    let fitted = client_update(&model, None, &client, &cfg, 2)
        .unwrap()
        .weights;
    let u = client_update(&fitted, Some(6), &client, &cfg, 3).unwrap();
    assert_eq!(
        u.wc_per_epoch.len(),
        cfg.epochs_client - cfg.beta_warmup_epochs
    );
    for w in u.wc_per_epoch.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{:?}", u.wc_per_epoch);
    }
    assert_eq!(u.codebook.unwrap().cluster_count(), 6);
}

#[test]
fn zero_beta_reproduces_plain_training() {
    let (model, client) = client_fixture();
    let cfg = TrainConfig {
        beta_client: 0.0,
        ..TrainConfig::default()
    };
    let plain = client_update(&model, None, &client, &cfg, 9).unwrap();
    let clustered = client_update(&model, Some(4), &client, &cfg, 9).unwrap();
    assert_eq!(plain.weights, clustered.weights);
    assert_eq!(plain.score, clustered.score);
    assert!(plain.codebook.is_none() && clustered.codebook.is_some());
}

#[test]
fn local_training_learns_and_scores_are_in_range() {
    let (model, client) = client_fixture();
    let u = client_update(&model, None, &client, &TrainConfig::default(), 1).unwrap();
    let labels = client.labeled.labels.as_ref().unwrap();
    let before = accuracy(&model, &client.labeled.inputs, labels).unwrap();
    let after = accuracy(&u.weights, &client.labeled.inputs, labels).unwrap();
    assert!(after > before, "{before} -> {after}");
    assert!(u.score >= 1.0 - 1e-3 && u.score <= 12.0 + 1e-3);
    assert!((0.0..=1.0).contains(&u.validation_accuracy));
}

#[test]
fn client_errors_name_the_client() {
    let (_, client) = client_fixture();
    let wrong = ModelWeights::init_mlp(&[5, 4], &mut seed::rng_from(1)).unwrap();
    match client_update(&wrong, None, &client, &TrainConfig::default(), 1) {
        Err(Error::Client { client: id, .. }) => assert_eq!(id, client.id),
        other => panic!("{other:?}"),
    }
}

#[test]
fn self_compression_clusters_and_preserves_predictions() {
    let (model, client) = client_fixture();
    let trained = client_update(&model, None, &client, &TrainConfig::default(), 2)
        .unwrap()
        .weights;
    let ood = data::make_ood(6, 300, (-4.0, 4.0), 8).unwrap().inputs;
    let out = self_compress(
        &trained,
        8,
        &ood,
        &TrainConfig::default(),
        seed::derive(1, Stream::Server, &[1]),
    )
    .unwrap();
    assert!(
        out.wc_exit * 10.0 <= out.wc_entry,
        "{} -> {}",
        out.wc_entry,
        out.wc_exit
    );
    assert!((wc_loss(&out.weights, &out.codebook).unwrap() - out.wc_exit).abs() < 1e-12);
    let snapped = snap(&out.weights, &out.codebook)
        .unwrap()
        .to_weights()
        .unwrap();
    let agree = predict(&trained, &client.unlabeled)
        .unwrap()
        .argmax_rows()
        .iter()
        .zip(predict(&snapped, &client.unlabeled).unwrap().argmax_rows())
        .filter(|(a, b)| **a == *b)
        .count();
    assert!(
        agree as f64 >= 0.8 * client.unlabeled.rows() as f64,
        "{agree}"
    );
}

fn sample_model(c: usize) -> ClusteredModel {
    let m = ModelWeights::init_mlp(&[3, 5, 2], &mut seed::rng_from(c as u64)).unwrap();
    let cb = Codebook::init(&m, c, &mut seed::rng_from(1)).unwrap();
    snap(&m, &cb).unwrap()
}

#[test]
fn dirty_padding_and_bad_indices_are_rejected() {
    // 15 weights at 3 bits leave 3 padding bits in the first layer's index section.
    let m = sample_model(5);
    let bytes = encode(&m);
    let index_section = HEADER_LEN + 8 + 4 + 4 * 5 + 4;
    let last = index_section + 15 * 3 / 8;
    let mut dirty = bytes.clone();
    dirty[last] |= 0x80;
    assert!(matches!(decode(&dirty), Err(Error::Decode { offset, .. }) if offset == index_section));
    // Index 7 is out of range for a 5-entry codebook.
    let mut out_of_range = bytes;
    out_of_range[index_section] |= 0b111;
    assert!(matches!(decode(&out_of_range), Err(Error::Decode { .. })));
}

#[test]
fn header_and_framing_sizes() {
    let m = sample_model(4);
    let bytes = encode(&m);
    let payload: usize = m
        .layers
        .iter()
        .map(|l| {
            4 * 4 + (l.indices.len() * 2).div_ceil(8) + 4 * l.bias.as_ref().map_or(0, Vec::len)
        })
        .sum();
    assert_eq!(bytes.len(), HEADER_LEN + 2 * LAYER_FRAMING_LEN + payload);
    assert_eq!(bytes[4], 1);
    assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
    assert_eq!(&bytes[9..13], &4u32.to_le_bytes());
}

proptest! {
    #[test]
    fn decoding_arbitrary_mutations_never_panics(c in 1usize..40, pos in 0usize..200, byte in any::<u8>()) {
        let m = sample_model(c);
        let mut bytes = encode(&m);
        let i = pos % bytes.len();
        bytes[i] = byte;
        if let Ok(back) = decode(&bytes) {
            // Whatever decodes must re-encode to the same bytes.
            prop_assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn decoding_random_bytes_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode(&bytes);
    }
}
