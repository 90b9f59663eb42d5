#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(corpus) = duffin_core::codec::deserialize::<duffin_core::trigger::TrainingCorpus>(data) {
        let _ = corpus.triples();
    }
});
