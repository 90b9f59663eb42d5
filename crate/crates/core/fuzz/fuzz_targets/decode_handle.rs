#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Building would open network clients; decoding and validation only.
    let _ = duffin_core::codec::deserialize::<duffin_core::client::HandleSpec>(data);
});
