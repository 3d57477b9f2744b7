use proptest::prelude::*;

use tgrnet::config::ExperimentConfig;
use tgrnet::params::Init;
use tgrnet::tgrm::{Recurrence, Reference};
use tgrnet::train::Contrast;

fn recurrence() -> impl Strategy<Value = Recurrence> {
    prop_oneof![Just(Recurrence::Tgrm), Just(Recurrence::Sgrm), Just(Recurrence::Rrb)]
}

fn reference() -> impl Strategy<Value = Reference> {
    prop_oneof![Just(Reference::Low), Just(Reference::Hh), Just(Reference::Ll), Just(Reference::Hl2)]
}

prop_compose! {
    fn config()(
        size8 in 1usize..40,
        train_count in 1usize..5000,
        seed in any::<u64>(),
        low in any::<bool>(),
        width in 1usize..64,
        rec in recurrence(),
        refr in reference(),
        steps in 0usize..6,
        share in any::<bool>(),
        std in prop::option::of(1e-4f64..1.0),
        lr in 1e-6f64..1.0,
        momentum in 0.0f64..0.99,
        wd in 0.0f64..0.1,
        weights in prop::option::of(prop::collection::vec(0.0f64..4.0, 1..7)),
        augment in any::<bool>(),
        clip in prop_oneof![Just(0.0f64), 0.1f64..100.0],
        recs in prop::collection::vec(recurrence(), 1..4),
        ablate_steps in prop::collection::vec(0usize..5, 1..4),
    ) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.data.size = size8 * 8;
        c.data.train_count = train_count;
        c.data.seed = seed;
        c.data.contrast = if low { Contrast::Low } else { Contrast::Normal };
        c.model.guide_width = width;
        c.model.selector.recurrence = rec;
        c.model.selector.reference = refr;
        c.model.selector.steps = steps;
        c.model.share_stream_params = share;
        c.model.init = std.map_or(Init::He, |std| Init::Gaussian { std });
        c.train.lr = lr;
        c.train.momentum = momentum;
        c.train.weight_decay = wd;
        c.train.loss_weights = weights.map(|mut w| {
            w.resize(steps + 1, 1.0);
            w
        });
        c.train.augment = augment;
        c.train.grad_clip = clip;
        c.ablate.recurrences = recs;
        c.ablate.steps = ablate_steps;
        c
    }
}

proptest! {
    #[test]
    fn text_round_trips(c in config()) {
        let text = c.to_text();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(back, c);
    }
}
