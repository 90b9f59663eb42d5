#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = duffin_core::codec::deserialize::<duffin_core::TriggerFingerprint>(data);
    let _ = duffin_core::codec::deserialize::<duffin_core::KnowledgeFingerprint>(data);
});
